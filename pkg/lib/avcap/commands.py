# -*- coding: utf-8 -*-

# AVCap command line

# Copyright (c) AVCap developers
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; version 2 of the License.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.
# See the GNU General Public License for more details.

#
# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import typing

import numpy as np

from avcap import captions
from avcap import checkpoints
from avcap import constants
from avcap import datasets
from avcap import gradcheck
from avcap import inference
from avcap import metrics
from avcap import settings
from avcap import synth
from avcap import training
from avcap.constants import AvcapError, ConfigError, DecoderPolicy, FrameSelection, InputError, Modality
from avcap.models import AVCapModel
from avcap.settings import RunConfig
from avcap.utils import io
from avcap.utils import runlogging

logger = logging.getLogger(__name__)


###############################################################
# ARGUMENTS
###############################################################
class AvcapArguments(object):

    MAKE_SYNTH = 'make-synth'
    TRAIN = 'train'
    CAPTION = 'caption'
    EVAL = 'eval'
    GRADCHECK = 'gradcheck'
    ABLATE = 'ablate'

    def __init__(self, prog: str = 'avcap'):
        self.parser = argparse.ArgumentParser(prog=prog, description='Desk-scale audio-visual captioning')
        self.parser.add_argument('-v', '--verbose', action='store_true', help="Debug logging")
        commands = self.parser.add_subparsers(dest='cmd', metavar='command')
        commands.required = True

        cmd = commands.add_parser(AvcapArguments.MAKE_SYNTH, help="Generate the synthetic tone/colour corpus")
        cmd.add_argument('--out', required=True, help="Output directory")
        cmd.add_argument('--n', type=int, default=8, help="Number of samples")
        cmd.add_argument('--seed', type=int, default=0, help="Random seed")
        cmd.add_argument('--duration', type=float, default=10.0, help="Audio length in seconds")
        cmd.add_argument('--n-frames', type=int, default=20, help="Frames per sample")
        cmd.add_argument('--image-size', type=int, default=constants.IMAGE_SIZE, help="Frame width and height")

        cmd = commands.add_parser(AvcapArguments.TRAIN, help="Train a model")
        self._add_config_arguments(cmd)
        cmd.add_argument('--output-dir', help="Run directory (overrides paths.output_dir)")
        cmd.add_argument('--steps', type=int, help="Total steps (overrides train.total_steps)")

        cmd = commands.add_parser(AvcapArguments.CAPTION, help="Caption the entries of a manifest or a single clip")
        cmd.add_argument('--checkpoint', required=True, help="Checkpoint (.avcp) of a training run")
        cmd.add_argument('--manifest', help="Manifest (JSON lines)")
        cmd.add_argument('--audio', help="Single clip: WAV file (instead of --manifest)")
        cmd.add_argument('--frames', help="Single clip: frame directory (instead of --manifest)")
        cmd.add_argument('--vocab', help="Vocabulary file (default: vocab.txt next to the checkpoint)")
        cmd.add_argument('--out', required=True, help="Output captions (JSON lines)")
        cmd.add_argument('--beam', type=int, help="Beam size")
        cmd.add_argument('--alpha', type=float, help="Length penalty exponent")
        cmd.add_argument('--max-len', type=int, help="Maximum caption length in tokens")
        cmd.add_argument('--greedy', action='store_true', help="Greedy decoding instead of beam search")

        cmd = commands.add_parser(AvcapArguments.EVAL, help="Score candidate captions against references")
        cmd.add_argument('--candidates', required=True, help="JSON lines {id, caption}")
        cmd.add_argument('--references', required=True, help="JSON lines {id, captions}")
        cmd.add_argument('--spice', type=float, help="Externally computed SPICE (adds spice and spider)")

        cmd = commands.add_parser(AvcapArguments.GRADCHECK, help="Finite-difference gradient check")
        cmd.add_argument('--config', help="Run configuration (JSON)")
        cmd.add_argument('--modality', choices=[m.value for m in Modality], help="Modality override")
        cmd.add_argument('--freeze-decoder', action='store_true', help="Check with a frozen text decoder")
        cmd.add_argument('--seed', type=int, default=0, help="Random seed")

        cmd = commands.add_parser(AvcapArguments.ABLATE, help="Train and score A, V and A+V models")
        self._add_config_arguments(cmd)
        cmd.add_argument('--output-dir', required=True, help="Directory for the three runs")
        cmd.add_argument('--steps', type=int, help="Total steps per run")
        cmd.add_argument('--eval-manifest', help="Manifest to score on (default: the training manifest)")

    @staticmethod
    def _add_config_arguments(cmd: argparse.ArgumentParser):
        cmd.add_argument('--config', help="Run configuration (JSON); desk preset when absent")
        cmd.add_argument('--manifest', help="Manifest (overrides paths.manifest)")
        cmd.add_argument('--modality', choices=[m.value for m in Modality], help="Modality override")

    def parse(self, argv: typing.Sequence[str] = None):
        self.args = self.parser.parse_args(argv)

    def get_command(self) -> str:
        return self.args.cmd

    def is_verbose(self) -> bool:
        return self.args.verbose

    def get(self, name: str, default=None):
        value = getattr(self.args, name, None)
        return default if value is None else value

    def get_help(self):
        return self.parser.format_help()


###############################################################
# SHARED STEPS
###############################################################
def run_config_from_args(args: AvcapArguments) -> RunConfig:
    config_path = args.get('config')
    cfg = settings.load_run_config(io.FileName(config_path)) if config_path else \
        settings.apply_environment(settings.desk_preset())
    if args.get('modality'):
        cfg.modality = Modality(args.get('modality'))
    if args.get('manifest'):
        cfg.paths.manifest = args.get('manifest')
    if args.get('output_dir'):
        cfg.paths.output_dir = args.get('output_dir')
    if args.get('steps') is not None:
        cfg.train.total_steps = args.get('steps')
    cfg.validate()
    return cfg


def load_manifest_of(cfg: RunConfig, need_captions: bool) -> typing.List[datasets.ManifestEntry]:
    if not cfg.paths.manifest:
        raise ConfigError('No manifest given (paths.manifest or --manifest)')
    entries = datasets.load_manifest(io.FileName(cfg.paths.manifest))
    datasets.check_modality(entries, cfg.modality, need_captions)
    return entries


def vocabulary_for(cfg: RunConfig, entries: typing.Sequence[datasets.ManifestEntry]) -> captions.Vocabulary:
    if cfg.paths.vocab:
        return captions.load_vocab(io.FileName(cfg.paths.vocab))
    return captions.build_vocab([c for e in entries for c in e.captions], cfg.min_count)


#
# Builds the model, applies pretrained initialisation, trains and persists the run directory:
# model.avcp, vocab.txt, config.json, loss.csv and run.json.
#
def train_run(cfg: RunConfig, entries: typing.Sequence[datasets.ManifestEntry],
              run_dir: io.FileName) -> typing.Tuple[AVCapModel, captions.Vocabulary, training.TrainResult]:
    vocab = vocabulary_for(cfg, entries)
    model = AVCapModel.create(cfg, vocab.size)
    policy = cfg.train.policy
    if policy.encoder_pretrained:
        if not policy.checkpoint:
            raise ConfigError('Encoder policy "{}" needs train.policy.checkpoint'.format(policy.encoder.value))
        training.init_from_checkpoint(model, policy)

    samples = datasets.load_dataset(entries, cfg)
    run_dir.makedirs()
    captions.save_vocab(vocab, run_dir.pjoin(constants.RUN_VOCAB_FILE))
    settings.save_run_config(cfg, run_dir.pjoin(constants.RUN_CONFIG_FILE))
    result = training.train_loop(samples, model, vocab, run_dir)
    return model, vocab, result


def load_trained_model(checkpoint_FN: io.FileName,
                       vocab_FN: io.FileName = None) -> typing.Tuple[AVCapModel, captions.Vocabulary]:
    source, metadata = checkpoints.load_checkpoint(checkpoint_FN)
    if 'config' not in metadata:
        raise ConfigError('Checkpoint {} carries no run configuration'.format(checkpoint_FN.getBase()))
    cfg = RunConfig.from_dict(metadata['config'])
    vocab_FN = vocab_FN or checkpoint_FN.getDirAsFileName().pjoin(constants.RUN_VOCAB_FILE)
    vocab = captions.load_vocab(vocab_FN)
    model = AVCapModel.create(cfg, vocab.size)
    checkpoints.load_into(model.params, source, strict=True)
    return model, vocab


#
# A one-entry manifest for `caption --audio/--frames`. The id is the WAV name without extension,
# or the frame directory name when there is no audio.
#
def single_clip_entry(audio_path: typing.Optional[str], frames_dir: typing.Optional[str]) -> datasets.ManifestEntry:
    if audio_path is None and frames_dir is None:
        raise ConfigError('Nothing to caption: give --manifest, or --audio and/or --frames')
    if audio_path is not None:
        entry_id = os.path.splitext(io.FileName(audio_path).getBase())[0]
    else:
        entry_id = io.FileName(frames_dir, isdir=True).getBase()
    return datasets.ManifestEntry(id=entry_id or 'clip', audio_path=audio_path, frames_dir=frames_dir)


def caption_inputs(args: AvcapArguments, modality: Modality) -> typing.List[datasets.ManifestEntry]:
    audio_path, frames_dir = args.get('audio'), args.get('frames')
    if args.get('manifest'):
        if audio_path is not None or frames_dir is not None:
            raise ConfigError('--manifest cannot be combined with --audio or --frames')
        entries = datasets.load_manifest(io.FileName(args.get('manifest')))
    else:
        entries = [single_clip_entry(audio_path, frames_dir)]
    datasets.check_modality(entries, modality)
    return entries


def caption_entries(model: AVCapModel, vocab: captions.Vocabulary, icfg: settings.InferenceConfig,
                    entries: typing.Sequence[datasets.ManifestEntry], greedy: bool = False) -> typing.List[dict]:
    cfg = model.cfg
    results = []
    for sample in datasets.load_dataset(entries, cfg):
        audio_patches = video_patches = None
        if cfg.modality.has_audio():
            audio_patches = sample.audio.patches[np.newaxis]
        if cfg.modality.has_video():
            video_patches = sample.video_patches(cfg, FrameSelection.CENTER).patches[np.newaxis]
        caption, score = inference.caption_sample(model, vocab, icfg, audio_patches, video_patches, greedy)
        logger.debug('{}: "{}" ({:.4f})'.format(sample.id, caption, score))
        results.append({'id': sample.id, 'caption': caption, 'score': score})
    return results


def read_candidates(candidates_FN: io.FileName) -> typing.Dict[str, str]:
    candidates = {}
    for line in _read_lines(candidates_FN):
        if not isinstance(line, dict) or not isinstance(line.get('id'), str) \
                or not isinstance(line.get('caption'), str):
            raise InputError('{}: every line needs "id" and "caption"'.format(candidates_FN.getBase()))
        if line['id'] in candidates:
            raise InputError('{}: id "{}" appears twice'.format(candidates_FN.getBase(), line['id']))
        candidates[line['id']] = line['caption']
    return candidates


def read_references(references_FN: io.FileName) -> typing.Dict[str, typing.List[str]]:
    references = {}
    for line in _read_lines(references_FN):
        refs = line.get('captions') if isinstance(line, dict) else None
        if not isinstance(line, dict) or not isinstance(line.get('id'), str) or not isinstance(refs, list):
            raise InputError('{}: every line needs "id" and "captions"'.format(references_FN.getBase()))
        if line['id'] in references:
            raise InputError('{}: id "{}" appears twice'.format(references_FN.getBase(), line['id']))
        references[line['id']] = [str(r) for r in refs]
    return references


def _read_lines(FN: io.FileName) -> list:
    if not FN.exists():
        raise InputError('File {} does not exist'.format(FN.getPath()))
    return FN.readJsonLines()


def bleu4_of(results: typing.Sequence[dict], entries: typing.Sequence[datasets.ManifestEntry]) -> float:
    pairs = metrics.make_pairs({r['id']: r['caption'] for r in results}, {e.id: e.captions for e in entries})
    return metrics.bleu_n(pairs, 4)


###############################################################
# COMMANDS
###############################################################
def cmd_make_synth(args: AvcapArguments) -> int:
    opts = synth.SynthOptions(duration_s=args.get('duration'), n_frames=args.get('n_frames'),
                              image_size=args.get('image_size'))
    out_dir = io.FileName(args.get('out'), isdir=True)
    entries = synth.make_synth(out_dir, args.get('n'), args.get('seed'), opts)
    logger.info('Manifest {} ({} entries)'.format(out_dir.pjoin(synth.MANIFEST_FILE).getPath(), len(entries)))
    return constants.EXIT_OK


def cmd_train(args: AvcapArguments) -> int:
    cfg = run_config_from_args(args)
    entries = load_manifest_of(cfg, need_captions=True)
    run_dir = io.FileName(cfg.paths.output_dir, isdir=True)
    _, _, result = train_run(cfg, entries, run_dir)
    logger.info('Run directory {} (final loss {})'.format(run_dir.getPath(), result.final_loss))
    return constants.EXIT_OK


def cmd_caption(args: AvcapArguments) -> int:
    checkpoint_FN = io.FileName(args.get('checkpoint'))
    vocab_FN = io.FileName(args.get('vocab')) if args.get('vocab') else None
    model, vocab = load_trained_model(checkpoint_FN, vocab_FN)

    icfg = model.cfg.inference
    icfg = settings.InferenceConfig(beam=args.get('beam', icfg.beam), alpha=args.get('alpha', icfg.alpha),
                                    max_len=args.get('max_len', icfg.max_len))
    entries = caption_inputs(args, model.cfg.modality)
    results = caption_entries(model, vocab, icfg, entries, greedy=args.get('greedy', False))
    io.FileName(args.get('out')).writeJsonLines(results)
    logger.info('Wrote {} captions to {}'.format(len(results), args.get('out')))
    return constants.EXIT_OK


def cmd_eval(args: AvcapArguments) -> int:
    candidates = read_candidates(io.FileName(args.get('candidates')))
    references = read_references(io.FileName(args.get('references')))
    pairs = metrics.make_pairs(candidates, references)
    report = metrics.evaluate_corpus(pairs, spice=args.get('spice'))
    sys.stdout.write(json.dumps(report, indent=1) + '\n')
    return constants.EXIT_OK


def cmd_gradcheck(args: AvcapArguments) -> int:
    config_path = args.get('config')
    cfg = settings.load_run_config(io.FileName(config_path)) if config_path else settings.desk_preset()
    if args.get('modality'):
        cfg.modality = Modality(args.get('modality'))
    if args.get('freeze_decoder', False):
        cfg.train.policy.text_decoder = DecoderPolicy.FREEZE
    report = gradcheck.run_gradcheck(cfg, seed=args.get('seed', 0))
    sys.stdout.write(report.as_text() + '\n')
    return constants.EXIT_OK if report.passed else constants.EXIT_RUNTIME_ERROR


#
# Trains one model per modality on the same manifest and scores greedy captions with BLEU-4,
# on --eval-manifest when given and on the training entries otherwise.
#
def cmd_ablate(args: AvcapArguments) -> int:
    base = run_config_from_args(args)
    out_dir = io.FileName(base.paths.output_dir, isdir=True)
    eval_FN = io.FileName(args.get('eval_manifest')) if args.get('eval_manifest') else None
    scores = {}
    for modality in Modality:
        cfg = base.copy()
        cfg.modality = modality
        entries = load_manifest_of(cfg, need_captions=True)
        eval_entries = entries
        if eval_FN is not None:
            eval_entries = datasets.load_manifest(eval_FN)
            datasets.check_modality(eval_entries, modality, need_captions=True)
        run_dir = out_dir.pjoin(modality.name.lower(), isdir=True)
        model, vocab, _ = train_run(cfg, entries, run_dir)
        results = caption_entries(model, vocab, cfg.inference, eval_entries, greedy=True)
        run_dir.pjoin('captions.jsonl').writeJsonLines(results)
        scores[modality.value] = bleu4_of(results, eval_entries)
        logger.info('Modality {}: bleu4 {:.4f}'.format(modality.value, scores[modality.value]))
    out_dir.pjoin('ablation.json').writeJson({'bleu4': scores})
    sys.stdout.write(json.dumps({'bleu4': scores}, indent=1, sort_keys=True) + '\n')
    return constants.EXIT_OK


COMMANDS = {
    AvcapArguments.MAKE_SYNTH: cmd_make_synth,
    AvcapArguments.TRAIN: cmd_train,
    AvcapArguments.CAPTION: cmd_caption,
    AvcapArguments.EVAL: cmd_eval,
    AvcapArguments.GRADCHECK: cmd_gradcheck,
    AvcapArguments.ABLATE: cmd_ablate
}


def main(argv: typing.Sequence[str] = None) -> int:
    args = AvcapArguments()
    args.parse(argv)
    runlogging.config(args.is_verbose())
    try:
        return COMMANDS[args.get_command()](args)
    except ConfigError as ex:
        logger.error('Configuration error: {}'.format(ex))
        return constants.EXIT_CONFIG_ERROR
    except AvcapError as ex:
        logger.error('{}'.format(ex))
        return constants.EXIT_RUNTIME_ERROR
