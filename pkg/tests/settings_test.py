import unittest
from unittest.mock import patch
import os
import tempfile

import logging

from avcap import constants
from avcap import settings
from avcap.constants import ConfigError, DecoderPolicy, EncoderPolicy, Modality, PoolMode
from avcap.settings import EncoderConfig, RunConfig
from avcap.utils import io

logger = logging.getLogger(__name__)
logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)


class Test_run_config(unittest.TestCase):

    def test_parse_serialise_parse_is_idempotent(self):
        for cfg in [settings.desk_preset(), settings.full_preset(), settings.full_preset(8)]:
            # act
            first = RunConfig.from_dict(cfg.to_dict())
            second = RunConfig.from_dict(first.to_dict())

            # assert
            self.assertEqual(cfg.to_dict(), first.to_dict())
            self.assertEqual(first, second)

    def test_enums_are_read_from_their_values(self):
        # arrange
        data = settings.desk_preset().to_dict()
        data['modality'] = 'A'
        data['encoder']['pool_mode'] = 'mean'
        data['train']['policy'] = {'encoder': 'pretrained_freeze', 'text_decoder': 'freeze', 'checkpoint': 'x.avcp'}

        # act
        cfg = RunConfig.from_dict(data)

        # assert
        self.assertEqual(Modality.A, cfg.modality)
        self.assertEqual(PoolMode.MEAN, cfg.encoder.pool_mode)
        self.assertEqual(EncoderPolicy.PRETRAINED_FREEZE, cfg.train.policy.encoder)
        self.assertEqual(DecoderPolicy.FREEZE, cfg.train.policy.text_decoder)
        self.assertTrue(cfg.train.policy.encoder_pretrained)

    def test_missing_sections_take_the_defaults(self):
        # act
        cfg = RunConfig.from_dict({'schema_version': 1})

        # assert
        self.assertEqual(settings.desk_preset().to_dict(), cfg.to_dict())

    def test_copy_is_independent(self):
        # arrange
        cfg = settings.desk_preset()

        # act
        other = cfg.copy()
        other.encoder.D = 64

        # assert
        self.assertEqual(32, cfg.encoder.D)

    def test_unknown_keys_are_rejected(self):
        for section in [None, 'frontend', 'encoder', 'decoder', 'train', 'inference', 'paths']:
            # arrange
            data = settings.desk_preset().to_dict()
            (data if section is None else data[section])['bogus'] = 1

            # act / assert
            with self.assertRaises(ConfigError, msg=str(section)):
                RunConfig.from_dict(data)

    def test_schema_version_must_match(self):
        for version in [None, 0, 2, '1']:
            # arrange
            data = settings.desk_preset().to_dict()
            data['schema_version'] = version

            # act / assert
            with self.assertRaises(ConfigError):
                RunConfig.from_dict(data)

    def test_wrong_value_types_are_rejected(self):
        for section, key, value in [('encoder', 'D', True), ('encoder', 'D', 3.5), ('train', 'peak_lr', 'x'),
                                    ('frontend', 'video_normalize', 1), ('encoder', 'pool_mode', 'max'),
                                    ('frontend', 'video_mean', [0.5, 0.5])]:
            # arrange
            data = settings.desk_preset().to_dict()
            data[section][key] = value

            # act / assert
            with self.assertRaises(ConfigError, msg='{}.{}'.format(section, key)):
                RunConfig.from_dict(data)

    def test_inconsistent_values_are_rejected(self):
        for section, key, value in [('encoder', 'H', 5), ('decoder', 'H', 3), ('train', 'warmup_steps', 300),
                                    ('train', 'label_smoothing', 1.0), ('frontend', 'fmax', 9000.0),
                                    ('frontend', 'n_mels', 120), ('frontend', 'norm_mean', 0.0)]:
            # arrange
            data = settings.desk_preset().to_dict()
            data[section][key] = value

            # act / assert
            with self.assertRaises(ConfigError, msg='{}.{}'.format(section, key)):
                RunConfig.from_dict(data)

    def test_frame_count_must_fit_the_tubelet(self):
        # arrange
        data = settings.desk_preset().to_dict()
        data['n_f'] = 3

        # act / assert
        with self.assertRaises(ConfigError):
            RunConfig.from_dict(data)

    def test_zero_steps_is_a_valid_run(self):
        # arrange
        data = settings.desk_preset().to_dict()
        data['train']['total_steps'] = 0

        # act
        cfg = RunConfig.from_dict(data)

        # assert
        self.assertEqual(0, cfg.train.total_steps)


class Test_presets(unittest.TestCase):

    def test_full_geometry_gives_708_tokens(self):
        # act
        cfg = settings.full_preset()

        # assert
        self.assertEqual(512, cfg.n_audio_tokens)
        self.assertEqual(196, cfg.n_video_tokens)
        self.assertEqual(708, cfg.n_audio_tokens + cfg.n_video_tokens)
        self.assertEqual(768, cfg.frontend.video_patch_dim(1))
        self.assertEqual((12, 768), (cfg.encoder.L + cfg.encoder.S, cfg.encoder.D))

    def test_tubelets_over_eight_frames(self):
        # act
        cfg = settings.full_preset(8)

        # assert
        self.assertEqual(784, cfg.n_video_tokens)
        self.assertEqual(1536, cfg.frontend.video_patch_dim(8))

    def test_token_counts_follow_the_modality(self):
        # arrange
        cfg = settings.full_preset()

        # act
        cfg.modality = Modality.V

        # assert
        self.assertEqual((0, 196), (cfg.n_audio_tokens, cfg.n_video_tokens))

    def test_frontend_window_in_samples(self):
        # act
        front = settings.desk_preset().frontend

        # assert
        self.assertEqual((400, 160), (front.win_length, front.hop_length))

    def test_architecture_split(self):
        # arrange
        base = EncoderConfig(D=768, L=11, S=1, H=12)

        for L in range(0, 13):
            # act
            cfg = settings.architecture_split(base, 12, L)

            # assert
            self.assertEqual((L, 12 - L), (cfg.L, cfg.S))
            self.assertEqual(768, cfg.D)

    def test_architecture_split_out_of_range(self):
        with self.assertRaises(ConfigError):
            settings.architecture_split(EncoderConfig(), 12, 13)
        with self.assertRaises(ConfigError):
            settings.architecture_split(EncoderConfig(), 12, -1)


class Test_config_files(unittest.TestCase):

    def test_saved_config_loads_back(self):
        with tempfile.TemporaryDirectory() as tmp:
            # arrange
            config_FN = io.FileName(tmp, isdir=True).pjoin('config.json')
            cfg = settings.full_preset()

            # act
            with patch.dict(os.environ, {}, clear=True):
                settings.save_run_config(cfg, config_FN)
                loaded = settings.load_run_config(config_FN)

            # assert
            self.assertEqual(cfg.to_dict(), loaded.to_dict())

    def test_missing_file_is_a_config_error(self):
        with self.assertRaises(ConfigError):
            settings.load_run_config(io.FileName('/nonexistent/avcap/config.json'))

    def test_broken_json_is_a_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            # arrange
            config_FN = io.FileName(tmp, isdir=True).pjoin('config.json')
            config_FN.saveStrToFile('{"schema_version": 1,')

            # act / assert
            with self.assertRaises(ConfigError):
                settings.load_run_config(config_FN)

    def test_seed_from_the_environment(self):
        # act
        with patch.dict(os.environ, {constants.ENV_SEED: '7'}):
            cfg = settings.apply_environment(settings.desk_preset())

        # assert
        self.assertEqual(7, cfg.train.seed)

    def test_blank_seed_keeps_the_config(self):
        # act
        with patch.dict(os.environ, {constants.ENV_SEED: ' '}):
            cfg = settings.apply_environment(settings.desk_preset())

        # assert
        self.assertEqual(0, cfg.train.seed)

    def test_non_integer_seed_is_rejected(self):
        with patch.dict(os.environ, {constants.ENV_SEED: 'seven'}):
            with self.assertRaises(ConfigError):
                settings.apply_environment(settings.desk_preset())


if __name__ == '__main__':
    unittest.main()
