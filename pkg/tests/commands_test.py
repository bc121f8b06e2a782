import unittest
import contextlib
import json
import os
import tempfile
from io import StringIO

import logging

from avcap import commands
from avcap import constants
from avcap import settings
from avcap import synth
from avcap.constants import Modality
from avcap.utils import io

from tests.fakes import small_train_config

logger = logging.getLogger(__name__)
logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)

SMALL_SYNTH_ARGS = ['--duration', '0.5', '--n-frames', '4', '--image-size', '32']


def run_cli(*argv: str):
    out = StringIO()
    with contextlib.redirect_stdout(out):
        code = commands.main(list(argv))
    return code, out.getvalue()


def write_small_config(path: str, steps: int) -> str:
    cfg = small_train_config(Modality.AV, steps)
    cfg.train.label_smoothing = 0.0
    settings.save_run_config(cfg, io.FileName(path))
    return path


def read_lines(path: str):
    return io.FileName(path).readJsonLines()


class Test_eval_command(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.candidates = os.path.join(self.tmp.name, 'candidates.jsonl')
        self.references = os.path.join(self.tmp.name, 'references.jsonl')
        io.FileName(self.references).writeJsonLines([
            {'id': 'x', 'captions': ['a dog runs in the park']},
            {'id': 'y', 'captions': ['the cat sleeps on a mat']}])

    def tearDown(self):
        self.tmp.cleanup()

    def test_prints_the_metric_report(self):
        # arrange
        io.FileName(self.candidates).writeJsonLines([{'id': 'y', 'caption': 'The cat sleeps on a mat.'},
                                                     {'id': 'x', 'caption': 'a dog runs in the park'}])

        # act
        code, out = run_cli('eval', '--candidates', self.candidates, '--references', self.references,
                            '--spice', '0.25')

        # assert
        self.assertEqual(constants.EXIT_OK, code)
        report = json.loads(out)
        self.assertEqual(constants.METRIC_KEYS + ['spice', 'spider'], list(report.keys()))
        self.assertAlmostEqual(1.0, report['bleu4'], places=9)
        self.assertAlmostEqual(10.0, report['cider'], places=9)

    def test_disjoint_ids_fail_at_runtime(self):
        # arrange
        io.FileName(self.candidates).writeJsonLines([{'id': 'x', 'caption': 'a dog'},
                                                     {'id': 'z', 'caption': 'a cat'}])

        # act
        code, out = run_cli('eval', '--candidates', self.candidates, '--references', self.references)

        # assert
        self.assertEqual(constants.EXIT_RUNTIME_ERROR, code)
        self.assertEqual('', out)

    def test_malformed_candidates_fail_at_runtime(self):
        # arrange
        io.FileName(self.candidates).writeJsonLines([{'id': 'x', 'text': 'a dog'}])

        # act
        code, _ = run_cli('eval', '--candidates', self.candidates, '--references', self.references)

        # assert
        self.assertEqual(constants.EXIT_RUNTIME_ERROR, code)

    def test_missing_candidates_file(self):
        # act
        code, _ = run_cli('eval', '--candidates', self.candidates, '--references', self.references)

        # assert
        self.assertEqual(constants.EXIT_RUNTIME_ERROR, code)


class Test_config_errors(unittest.TestCase):

    def test_missing_manifest_exits_2(self):
        with tempfile.TemporaryDirectory() as tmp:
            # arrange
            config = write_small_config(os.path.join(tmp, 'config.json'), 5)

            # act
            code, _ = run_cli('train', '--config', config, '--manifest', os.path.join(tmp, 'absent.jsonl'),
                              '--output-dir', os.path.join(tmp, 'run'))

            # assert
            self.assertEqual(constants.EXIT_CONFIG_ERROR, code)
            self.assertFalse(os.path.exists(os.path.join(tmp, 'run', constants.RUN_CHECKPOINT_FILE)))

    def test_missing_config_exits_2(self):
        # act
        code, _ = run_cli('train', '--config', '/nonexistent/avcap/config.json')

        # assert
        self.assertEqual(constants.EXIT_CONFIG_ERROR, code)

    def test_wrong_schema_version_exits_2(self):
        with tempfile.TemporaryDirectory() as tmp:
            # arrange
            config_FN = io.FileName(tmp, isdir=True).pjoin('config.json')
            data = settings.desk_preset().to_dict()
            data['schema_version'] = 2
            config_FN.writeJson(data)

            # act
            code, _ = run_cli('gradcheck', '--config', config_FN.getPath())

            # assert
            self.assertEqual(constants.EXIT_CONFIG_ERROR, code)

    def test_missing_required_flag_is_a_usage_error(self):
        with contextlib.redirect_stderr(StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                commands.main(['caption', '--manifest', 'x.jsonl'])
        self.assertEqual(2, ctx.exception.code)


class Test_gradcheck_command(unittest.TestCase):

    def test_prints_one_line_per_group(self):
        # act
        code, out = run_cli('gradcheck', '--freeze-decoder')

        # assert
        self.assertEqual(constants.EXIT_OK, code)
        self.assertIn('decoder          skipped (frozen)', out)
        self.assertEqual('gradcheck PASSED', out.strip().splitlines()[-1])


class Test_train_and_caption(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        root = cls.tmp.name
        cls.synth_dir = os.path.join(root, 'synth')
        cls.manifest = os.path.join(cls.synth_dir, synth.MANIFEST_FILE)
        cls.run_dir = os.path.join(root, 'run')
        cls.checkpoint = os.path.join(cls.run_dir, constants.RUN_CHECKPOINT_FILE)
        cls.config = write_small_config(os.path.join(root, 'config.json'), 60)

        cls.synth_code, _ = run_cli('make-synth', '--out', cls.synth_dir, '--n', '4', *SMALL_SYNTH_ARGS)
        cls.train_code, _ = run_cli('train', '--config', cls.config, '--manifest', cls.manifest,
                                    '--output-dir', cls.run_dir)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def out_path(self, name: str) -> str:
        return os.path.join(self.tmp.name, name)

    def test_training_writes_the_run_directory(self):
        # assert
        self.assertEqual(constants.EXIT_OK, self.synth_code)
        self.assertEqual(constants.EXIT_OK, self.train_code)
        for name in [constants.RUN_CHECKPOINT_FILE, constants.RUN_VOCAB_FILE, constants.RUN_CONFIG_FILE,
                     constants.RUN_LOSS_LOG_FILE, constants.RUN_MANIFEST_FILE]:
            self.assertTrue(os.path.exists(os.path.join(self.run_dir, name)), name)

    def test_caption_every_entry_in_manifest_order(self):
        # arrange
        out = self.out_path('captions.jsonl')

        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.manifest, '--out', out)

        # assert
        self.assertEqual(constants.EXIT_OK, code)
        lines = read_lines(out)
        self.assertEqual([synth.sample_id(i) for i in range(4)], [line['id'] for line in lines])
        for line in lines:
            self.assertIsInstance(line['caption'], str)
            self.assertLessEqual(line['score'], 0.0)

    def test_beam_of_one_matches_greedy(self):
        # arrange
        beam_out, greedy_out = self.out_path('beam1.jsonl'), self.out_path('greedy.jsonl')

        # act
        run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.manifest, '--out', beam_out,
                '--beam', '1')
        run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.manifest, '--out', greedy_out,
                '--greedy')

        # assert
        self.assertEqual([line['caption'] for line in read_lines(greedy_out)],
                         [line['caption'] for line in read_lines(beam_out)])

    def test_empty_manifest_gives_an_empty_file(self):
        # arrange
        empty = self.out_path('empty.jsonl')
        io.FileName(empty).saveStrToFile('')
        out = self.out_path('empty_captions.jsonl')

        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', empty, '--out', out)

        # assert
        self.assertEqual(constants.EXIT_OK, code)
        self.assertEqual('', io.FileName(out).loadFileToStr())

    def test_caption_with_a_missing_manifest_exits_2(self):
        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.out_path('absent.jsonl'),
                          '--out', self.out_path('never.jsonl'))

        # assert
        self.assertEqual(constants.EXIT_CONFIG_ERROR, code)

    def test_single_clip_gives_one_line(self):
        # arrange
        key = synth.sample_id(1)
        manifest_out, clip_out = self.out_path('all.jsonl'), self.out_path('clip.jsonl')
        run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.manifest, '--out', manifest_out)

        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--out', clip_out,
                          '--audio', os.path.join(self.synth_dir, 'audio', key + '.wav'),
                          '--frames', os.path.join(self.synth_dir, 'frames', key))

        # assert
        self.assertEqual(constants.EXIT_OK, code)
        lines = read_lines(clip_out)
        self.assertEqual(1, len(lines))
        self.assertEqual(key, lines[0]['id'])
        self.assertEqual(read_lines(manifest_out)[1]['caption'], lines[0]['caption'])

    def test_single_clip_missing_a_modality_exits_2(self):
        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--out', self.out_path('never.jsonl'),
                          '--audio', os.path.join(self.synth_dir, 'audio', synth.sample_id(0) + '.wav'))

        # assert
        self.assertEqual(constants.EXIT_CONFIG_ERROR, code)

    def test_caption_needs_a_manifest_or_a_clip(self):
        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--out', self.out_path('never.jsonl'))

        # assert
        self.assertEqual(constants.EXIT_CONFIG_ERROR, code)
        self.assertFalse(os.path.exists(self.out_path('never.jsonl')))

    def test_manifest_and_single_clip_are_exclusive(self):
        # act
        code, _ = run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.manifest,
                          '--out', self.out_path('never.jsonl'),
                          '--frames', os.path.join(self.synth_dir, 'frames', synth.sample_id(0)))

        # assert
        self.assertEqual(constants.EXIT_CONFIG_ERROR, code)

    def test_captions_can_be_scored(self):
        # arrange
        out = self.out_path('scored.jsonl')
        references = self.out_path('references.jsonl')
        run_cli('caption', '--checkpoint', self.checkpoint, '--manifest', self.manifest, '--out', out)
        io.FileName(references).writeJsonLines([{'id': e['id'], 'captions': e['captions']}
                                                for e in read_lines(self.manifest)])

        # act
        code, printed = run_cli('eval', '--candidates', out, '--references', references)

        # assert
        self.assertEqual(constants.EXIT_OK, code)
        report = json.loads(printed)
        for key in ['bleu1', 'bleu2', 'bleu3', 'bleu4', 'rougeL']:
            self.assertTrue(0.0 <= report[key] <= 1.0)


class Test_ablate_command(unittest.TestCase):

    def test_both_modalities_beat_either_one(self):
        with tempfile.TemporaryDirectory() as tmp:
            # arrange
            train_dir, eval_dir = os.path.join(tmp, 'train'), os.path.join(tmp, 'eval')
            run_cli('make-synth', '--out', train_dir, '--n', '16', '--seed', '0', *SMALL_SYNTH_ARGS)
            run_cli('make-synth', '--out', eval_dir, '--n', '16', '--seed', '1', *SMALL_SYNTH_ARGS)
            config = write_small_config(os.path.join(tmp, 'config.json'), 400)

            # act
            code, out = run_cli('ablate', '--config', config,
                                '--manifest', os.path.join(train_dir, synth.MANIFEST_FILE),
                                '--eval-manifest', os.path.join(eval_dir, synth.MANIFEST_FILE),
                                '--output-dir', os.path.join(tmp, 'ablation'))

            # assert
            self.assertEqual(constants.EXIT_OK, code)
            bleu4 = json.loads(out)['bleu4']
            logger.info('ablation bleu4 {}'.format(bleu4))
            self.assertGreaterEqual(bleu4['A+V'] - bleu4['A'], 0.2)
            self.assertGreaterEqual(bleu4['A+V'] - bleu4['V'], 0.2)
            self.assertTrue(os.path.exists(os.path.join(tmp, 'ablation', 'av', constants.RUN_CHECKPOINT_FILE)))


if __name__ == '__main__':
    unittest.main()
