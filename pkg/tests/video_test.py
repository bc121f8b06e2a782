import unittest
import tempfile

import logging

import numpy as np

from avcap import video
from avcap.audio import PatchSequence
from avcap.constants import FrameSelection, InputError, ShapeError
from avcap.settings import FrontendConfig
from avcap.utils import io
from avcap.video import FrameStack

logger = logging.getLogger(__name__)
logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)


class Test_select_frames(unittest.TestCase):

    def test_center_selection_of_eight_out_of_twenty(self):
        # act
        actual = video.select_frames(list(range(20)), 8, FrameSelection.CENTER)

        # assert
        self.assertEqual([6, 7, 8, 9, 10, 11, 12, 13], actual)

    def test_center_selection_of_a_single_frame(self):
        # act
        actual = video.select_frames(list(range(20)), 1, FrameSelection.CENTER)

        # assert
        self.assertEqual([9], actual)

    def test_all_frames_when_counts_match(self):
        # act
        actual = video.select_frames(list(range(8)), 8, FrameSelection.CENTER)

        # assert
        self.assertEqual(list(range(8)), actual)

    def test_random_start_is_contiguous_and_seeded(self):
        # arrange
        available = list(range(20))

        # act
        first = video.select_frames(available, 8, FrameSelection.RANDOM_START, np.random.default_rng(5))
        again = video.select_frames(available, 8, FrameSelection.RANDOM_START, np.random.default_rng(5))

        # assert
        self.assertEqual(first, again)
        self.assertEqual(list(range(first[0], first[0] + 8)), first)
        self.assertLessEqual(first[-1], 19)

    def test_too_few_frames_are_rejected(self):
        with self.assertRaises(InputError):
            video.select_frames(list(range(5)), 8, FrameSelection.CENTER)

    def test_random_start_without_generator_is_rejected(self):
        with self.assertRaises(InputError):
            video.select_frames(list(range(20)), 8, FrameSelection.RANDOM_START)


class Test_patchify_video(unittest.TestCase):

    def test_single_frame_gives_196_patches_of_768(self):
        # arrange
        fs = FrameStack(frames=np.zeros((1, 3, 224, 224)))

        # act
        ps = video.patchify_video(fs, 16)

        # assert
        self.assertEqual((196, 768), ps.patches.shape)
        self.assertEqual(196, video.video_token_count(224, 16, 1))

    def test_eight_frames_give_784_tubelet_patches_of_1536(self):
        # arrange
        fs = FrameStack(frames=np.zeros((8, 3, 224, 224)))

        # act
        ps = video.patchify_video(fs, 16, tubelet=2)

        # assert
        self.assertEqual((784, 1536), ps.patches.shape)
        self.assertEqual(784, video.video_token_count(224, 16, 8))
        self.assertEqual(784, FrontendConfig().n_video_tokens(8))

    def test_mid_grey_normalises_to_zero(self):
        # arrange
        cfg = FrontendConfig(image_size=32)
        fs = FrameStack(frames=np.full((1, 3, 32, 32), 0.5, dtype=np.float32))

        # act
        ps = video.stack_to_patches(fs, cfg)

        # assert
        np.testing.assert_array_equal(ps.patches, 0.0)
        self.assertEqual(np.float32, ps.patches.dtype)

    def test_patches_are_row_major_and_channel_major_inside(self):
        # arrange
        frame = np.zeros((3, 4, 4))
        frame[0] = np.arange(16).reshape(4, 4)
        frame[1] = 100.0
        frame[2] = 200.0

        # act
        ps = video.patchify_video(FrameStack(frames=frame[np.newaxis]), 2)

        # assert
        self.assertEqual((4, 12), ps.patches.shape)
        np.testing.assert_array_equal([0, 1, 4, 5], ps.patches[0][:4])
        np.testing.assert_array_equal([2, 3, 6, 7], ps.patches[1][:4])
        np.testing.assert_array_equal([8, 9, 12, 13], ps.patches[2][:4])
        np.testing.assert_array_equal(100.0, ps.patches[0][4:8])
        np.testing.assert_array_equal(200.0, ps.patches[0][8:])

    def test_round_trip_is_exact_for_both_paths(self):
        # arrange
        rng = np.random.default_rng(11)
        single = FrameStack(frames=rng.random((1, 3, 32, 32)))
        clip = FrameStack(frames=rng.random((4, 3, 32, 32)))

        # act
        single_back = video.unpatchify_video(video.patchify_video(single, 16))
        clip_back = video.unpatchify_video(video.patchify_video(clip, 16, tubelet=2))

        # assert
        np.testing.assert_array_equal(single.frames, single_back.frames)
        np.testing.assert_array_equal(clip.frames, clip_back.frames)

    def test_frame_size_not_divisible_by_patch_is_rejected(self):
        with self.assertRaises(ShapeError):
            video.patchify_video(FrameStack(frames=np.zeros((1, 3, 30, 30))), 16)

    def test_odd_frame_count_with_tubelets_is_rejected(self):
        with self.assertRaises(ShapeError):
            video.patchify_video(FrameStack(frames=np.zeros((3, 3, 32, 32))), 16, tubelet=2)

    def test_grey_frames_are_rejected(self):
        with self.assertRaises(ShapeError):
            video.patchify_video(FrameStack(frames=np.zeros((1, 1, 32, 32))), 16)

    def test_patch_sequence_reports_its_geometry(self):
        # act
        ps = video.patchify_video(FrameStack(frames=np.zeros((4, 3, 32, 32))), 16, tubelet=2)

        # assert
        self.assertIsInstance(ps, PatchSequence)
        self.assertEqual((2, 2, 2), ps.geometry)
        self.assertEqual(2, ps.depth)


class Test_frame_files(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = io.FileName(self.tmp.name, isdir=True)

    def tearDown(self):
        self.tmp.cleanup()

    def _write_frames(self, count: int, size: int = 32):
        for i in range(count):
            rgb = np.full((size, size, 3), i * 10, dtype=np.uint8)
            video.save_frame(self.dir.pjoin('frame_{:04d}.png'.format(i)), rgb)

    def test_frames_are_listed_in_name_order(self):
        # arrange
        self._write_frames(12)

        # act
        files = video.list_frame_files(self.dir)

        # assert
        self.assertEqual(12, len(files))
        self.assertEqual('frame_0000.png', files[0].getBase())
        self.assertEqual('frame_0011.png', files[-1].getBase())

    def test_frame_directory_to_patches_uses_the_center_frame(self):
        # arrange
        self._write_frames(5)
        cfg = FrontendConfig(image_size=32, video_normalize=False)

        # act
        ps = video.frames_to_patches(self.dir, cfg, 1)

        # assert
        self.assertEqual((4, 768), ps.patches.shape)
        np.testing.assert_allclose(ps.patches, 20 / 255.0, rtol=1e-6)

    def test_in_memory_clip_matches_the_file_path(self):
        # arrange
        self._write_frames(6)
        cfg = FrontendConfig(image_size=32)

        # act
        from_files = video.frames_to_patches(self.dir, cfg, 4)
        from_clip = video.clip_to_patches(video.load_clip(self.dir, 32), cfg, 4)

        # assert
        np.testing.assert_allclose(from_files.patches, from_clip.patches, rtol=1e-6)

    def test_wrong_frame_size_is_rejected(self):
        # arrange
        self._write_frames(2, size=16)

        # act / assert
        with self.assertRaises(InputError):
            video.load_frame(self.dir.pjoin('frame_0000.png'), 32)

    def test_empty_directory_is_rejected(self):
        with self.assertRaises(InputError):
            video.list_frame_files(self.dir)

    def test_missing_directory_is_rejected(self):
        with self.assertRaises(InputError):
            video.list_frame_files(self.dir.pjoin('nothing', isdir=True))


if __name__ == '__main__':
    unittest.main()
