import unittest
from unittest.mock import patch
import os
import tempfile

import logging

import numpy as np

from avcap import audio
from avcap import datasets
from avcap import settings
from avcap import synth
from avcap.constants import ConfigError, FrameSelection, Modality
from avcap.datasets import ManifestEntry
from avcap.synth import SynthOptions
from avcap.utils import io

from tests.fakes import small_run_config, small_synth

logger = logging.getLogger(__name__)
logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)


def all_files(root: str):
    found = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            path = os.path.join(dirpath, name)
            with open(path, 'rb') as f:
                found[os.path.relpath(path, root)] = f.read()
    return found


class Test_manifest_entries(unittest.TestCase):

    def test_relative_paths_are_resolved_against_the_manifest(self):
        # act
        entry = ManifestEntry.from_dict({'id': 'x', 'audio_path': 'audio/x.wav', 'frames_dir': '/abs/frames/x/',
                                         'captions': ['a dog']}, '/data/synth/')

        # assert
        self.assertEqual('/data/synth/audio/x.wav', entry.audio_path)
        self.assertEqual('/abs/frames/x/', entry.frames_dir)
        self.assertEqual(['a dog'], entry.captions)

    def test_captions_are_optional(self):
        # act
        entry = ManifestEntry.from_dict({'id': 'x', 'audio_path': 'x.wav'})

        # assert
        self.assertEqual([], entry.captions)
        self.assertIsNone(entry.frames_dir)

    def test_malformed_lines_are_rejected(self):
        for data in [['x'], {'audio_path': 'x.wav'}, {'id': '', 'audio_path': 'x.wav'}, {'id': 'x'},
                     {'id': 'x', 'audio_path': 'x.wav', 'captions': 'a dog'},
                     {'id': 'x', 'audio_path': 'x.wav', 'captions': [1]},
                     {'id': 'x', 'audio_path': ''},
                     {'id': 'x', 'audio_path': 'x.wav', 'video': 'x.mp4'}]:
            with self.assertRaises(ConfigError, msg=str(data)):
                ManifestEntry.from_dict(data, '', 1)

    def test_modality_check(self):
        # arrange
        audio_only = [ManifestEntry(id='x', audio_path='x.wav', captions=['a'])]
        uncaptioned = [ManifestEntry(id='y', audio_path='y.wav', frames_dir='y/')]

        # act
        datasets.check_modality(audio_only, Modality.A, need_captions=True)
        datasets.check_modality(uncaptioned, Modality.AV)

        # assert
        with self.assertRaises(ConfigError):
            datasets.check_modality(audio_only, Modality.AV)
        with self.assertRaises(ConfigError):
            datasets.check_modality(audio_only, Modality.V)
        with self.assertRaises(ConfigError):
            datasets.check_modality(uncaptioned, Modality.AV, need_captions=True)


class Test_manifest_files(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = io.FileName(self.tmp.name, isdir=True)
        self.manifest_FN = self.dir.pjoin('manifest.jsonl')

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_then_load(self):
        # arrange
        entries = [ManifestEntry(id='b', audio_path='audio/b.wav', captions=['a b']),
                   ManifestEntry(id='a', frames_dir='frames/a/', captions=['c', 'd'])]

        # act
        datasets.write_manifest(self.manifest_FN, entries)
        loaded = datasets.load_manifest(self.manifest_FN)

        # assert
        self.assertEqual(['b', 'a'], [e.id for e in loaded])
        self.assertEqual(self.dir.getPath() + 'audio/b.wav', loaded[0].audio_path)
        self.assertIsNone(loaded[0].frames_dir)
        self.assertEqual(['c', 'd'], loaded[1].captions)

    def test_blank_lines_are_skipped(self):
        # arrange
        self.manifest_FN.saveStrToFile('\n{"id": "x", "audio_path": "x.wav"}\n\n')

        # act
        loaded = datasets.load_manifest(self.manifest_FN)

        # assert
        self.assertEqual(1, len(loaded))

    def test_duplicate_ids_are_rejected(self):
        # arrange
        datasets.write_manifest(self.manifest_FN, [ManifestEntry(id='x', audio_path='x.wav'),
                                                   ManifestEntry(id='x', audio_path='y.wav')])

        # act / assert
        with self.assertRaises(ConfigError):
            datasets.load_manifest(self.manifest_FN)

    def test_broken_json_is_rejected(self):
        # arrange
        self.manifest_FN.saveStrToFile('{"id": "x", "audio_path": "x.wav"}\n{"id": \n')

        # act / assert
        with self.assertRaises(ConfigError):
            datasets.load_manifest(self.manifest_FN)

    def test_missing_manifest_is_rejected(self):
        with self.assertRaises(ConfigError):
            datasets.load_manifest(self.dir.pjoin('absent.jsonl'))


class Test_synthetic_corpus(unittest.TestCase):

    def test_same_seed_gives_identical_files(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            # act
            small_synth(io.FileName(first, isdir=True), 4, seed=3)
            small_synth(io.FileName(second, isdir=True), 4, seed=3)

            # assert
            files = all_files(first)
            self.assertEqual(files, all_files(second))
            self.assertIn('manifest.jsonl', files)
            # manifest, four WAVs and four frames per sample
            self.assertEqual(1 + 4 + 4 * 4, len(files))

    def test_captions_follow_the_template(self):
        with tempfile.TemporaryDirectory() as tmp:
            # act
            entries = small_synth(io.FileName(tmp, isdir=True), 16)

            # assert
            self.assertEqual(16, len({e.captions[0] for e in entries}))
            for e in entries:
                self.assertRegex(e.captions[0], synth.CAPTION_PATTERN)
                self.assertTrue(os.path.isabs(e.audio_path))

    def test_caption_words_are_tied_to_each_modality(self):
        # act
        words = [synth.sample_words(i) for i in range(16)]

        # assert
        self.assertEqual(4, len({tone for tone, _ in words[:4]}))
        self.assertEqual({'red'}, {colour for _, colour in words[:4]})
        self.assertEqual('a middle tone with a green screen', synth.synth_caption(5))

    def test_zero_samples_is_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                synth.make_synth(io.FileName(tmp, isdir=True), 0, 0)

    def test_ten_second_tone_gives_998_frames(self):
        # arrange
        w = synth.tone_waveform(250.0, np.random.default_rng(0), SynthOptions())

        # act
        m = audio.compute_logmel(w, settings.desk_preset().frontend)

        # assert
        self.assertEqual(160000, w.samples.shape[0])
        self.assertEqual((998, 128), m.frames.shape)


class Test_load_dataset(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.entries = small_synth(io.FileName(cls.tmp.name, isdir=True), 3)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_audio_only_never_reads_frames(self):
        # arrange
        cfg = small_run_config(Modality.A)

        # act
        with patch('avcap.video.load_clip') as load_clip:
            samples = datasets.load_dataset(self.entries, cfg)

        # assert
        load_clip.assert_not_called()
        self.assertEqual([e.id for e in self.entries], [s.id for s in samples])
        for s in samples:
            self.assertIsNone(s.clip)
            self.assertEqual((2, 256), s.audio.patches.shape)

    def test_video_only_never_reads_audio(self):
        # arrange
        cfg = small_run_config(Modality.V)

        # act
        with patch('avcap.audio.audio_to_patches') as audio_to_patches:
            samples = datasets.load_dataset(self.entries, cfg)

        # assert
        audio_to_patches.assert_not_called()
        for s in samples:
            self.assertIsNone(s.audio)
            self.assertEqual((4, 3, 32, 32), s.clip.shape)

    def test_both_modalities_in_manifest_order(self):
        # arrange
        cfg = small_run_config(Modality.AV)

        # act
        samples = datasets.load_dataset(self.entries, cfg, workers=2)

        # assert
        self.assertEqual([e.id for e in self.entries], [s.id for s in samples])
        self.assertEqual(self.entries[1].captions, samples[1].captions)
        patches = samples[0].video_patches(cfg, FrameSelection.CENTER)
        self.assertEqual((4, 768), patches.patches.shape)

    def test_too_few_frames_for_the_clip_length(self):
        # arrange
        cfg = small_run_config(Modality.V)
        cfg.n_f = 8

        # act / assert
        with self.assertRaises(ConfigError):
            datasets.load_dataset(self.entries, cfg)

    def test_empty_manifest_loads_nothing(self):
        self.assertEqual([], datasets.load_dataset([], small_run_config()))


if __name__ == '__main__':
    unittest.main()
