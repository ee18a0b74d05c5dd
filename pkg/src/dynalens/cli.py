"""Command-line front door composing the pipeline.

Subcommands: parse, basis, loudness, target, train, loo, fit, sens,
compare.  Exit codes: 0 success, 1 usage error, 2 input or parse
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .basis import basis_matrix_to_csv, build_basis_matrix, vocabulary_sidecar
from .evaluate import loo_cross_validation, report_csv, report_table
from .loudness import (alignment_from_csv, loudness_curve_from_csv,
                       loudness_curve_to_csv, momentary_loudness,
                       normalize_curve, read_wav, sample_at_score_times,
                       target_curve_from_csv, target_curve_to_csv)
from .models import (DivergenceError, TrainConfig, TrainedModel,
                     fit_to_performance, load_model, save_model, train,
                     training_log_csv)
from .score import ScoreError, parse_score, score_onsets, score_to_text
from .sensitivity import (HeatmapOptions, graph_to_csv, render_heatmap,
                          sd_graph, sensitivity_graph)
from .util import fmt17

LOGGER = logging.getLogger(__name__)

_FUSION_SECTION = "fusion"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass
class PieceFiles:
    """Input files of one piece: a score plus either a precomputed
    target CSV or an audio recording with its alignment."""

    piece_id: str
    score: str
    target: str = ""
    audio: str = ""
    alignment: str = ""


@dataclass
class ProjectConfig:
    output_dir: str = "out"
    kind: str = "ffnn"
    validation_count: int = 4
    fusion: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    pieces: list = field(default_factory=list)


def write_config(config: ProjectConfig) -> str:
    lines = ["[project]",
             f"output_dir = {config.output_dir}",
             f"kind = {config.kind}",
             f"validation_count = {config.validation_count}",
             "",
             "[train]"]
    for f in fields(config.train):
        value = getattr(config.train, f.name)
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = fmt17(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    lines += ["", f"[{_FUSION_SECTION}]"]
    for feature in sorted(config.fusion):
        lines.append(f"{feature} = {config.fusion[feature]}")
    lines += ["", "[pieces]"]
    for piece in sorted(config.pieces, key=lambda p: p.piece_id):
        if piece.target:
            lines.append(f"{piece.piece_id} = {piece.score}, {piece.target}")
        else:
            lines.append(f"{piece.piece_id} = {piece.score}, {piece.audio}, "
                         f"{piece.alignment}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base_dir: Path | None = None) -> ProjectConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    config = ProjectConfig()

    def resolve(path: str) -> str:
        if base_dir is None:
            return path
        return str((base_dir / path))

    if parser.has_section("project"):
        sec = parser["project"]
        config.output_dir = resolve(sec.get("output_dir", config.output_dir))
        config.kind = sec.get("kind", config.kind)
        config.validation_count = sec.getint("validation_count",
                                             config.validation_count)
    if parser.has_section("train"):
        kwargs = {}
        sec = parser["train"]
        for f in fields(TrainConfig):
            if f.name not in sec:
                continue
            raw = sec[f.name]
            if raw == "none":
                kwargs[f.name] = None
            elif f.name == "optimizer":
                kwargs[f.name] = raw
            elif f.name in ("max_epochs", "patience", "seed", "hidden_size"):
                kwargs[f.name] = int(raw)
            elif f.name == "exact_lin":
                kwargs[f.name] = raw == "true"
            else:
                kwargs[f.name] = float(raw)
        config.train = TrainConfig(**kwargs)
    if parser.has_section(_FUSION_SECTION):
        config.fusion = dict(parser[_FUSION_SECTION])
    if parser.has_section("pieces"):
        for piece_id, value in parser["pieces"].items():
            parts = [p.strip() for p in value.split(",")]
            if len(parts) == 2:
                config.pieces.append(PieceFiles(
                    piece_id=piece_id, score=resolve(parts[0]),
                    target=resolve(parts[1])))
            elif len(parts) == 3:
                config.pieces.append(PieceFiles(
                    piece_id=piece_id, score=resolve(parts[0]),
                    audio=resolve(parts[1]), alignment=resolve(parts[2])))
            else:
                raise ValueError(f"piece {piece_id!r} needs 'score, target' "
                                 "or 'score, audio, alignment'")
    config.pieces.sort(key=lambda p: p.piece_id)
    return config


def read_config(path) -> ProjectConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"),
                        base_dir=path.parent)


def _read_text(path) -> str:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return path.read_text(encoding="utf-8-sig")


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_score(path):
    return parse_score(_read_text(path))


def _load_piece(piece: PieceFiles, fusion: dict):
    score = _load_score(piece.score)
    matrix = build_basis_matrix(score, fusion)
    if piece.target:
        target = target_curve_from_csv(_read_text(piece.target))
        if len(target.values) != matrix.n_rows:
            raise ValueError(f"piece {piece.piece_id}: target has "
                             f"{len(target.values)} rows but the onset grid "
                             f"has {matrix.n_rows}")
    else:
        curve = momentary_loudness(read_wav(piece.audio))
        curve = normalize_curve(curve)
        align = alignment_from_csv(_read_text(piece.alignment))
        target = sample_at_score_times(curve, align, score_onsets(score))
    return piece.piece_id, matrix, target


def _load_pieces(config: ProjectConfig):
    if not config.pieces:
        raise ValueError("config lists no pieces")
    return [_load_piece(p, config.fusion) for p in config.pieces]


def _effective_config(args) -> ProjectConfig:
    config = read_config(args.config) if args.config else ProjectConfig()
    if getattr(args, "seed", None) is not None:
        config.train.seed = args.seed
    if getattr(args, "kind", None):
        config.kind = args.kind
    return config


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_parse(args) -> int:
    dump = score_to_text(_load_score(args.score))
    if args.out:
        _write_text(args.out, dump)
    else:
        sys.stdout.write(dump)
    return 0


def _cmd_basis(args) -> int:
    config = _effective_config(args)
    matrix = build_basis_matrix(_load_score(args.score), config.fusion)
    out = Path(args.out)
    _write_text(out, basis_matrix_to_csv(matrix))
    _write_text(out.with_suffix(".vocab.txt"), vocabulary_sidecar(matrix))
    return 0


def _cmd_loudness(args) -> int:
    curve = momentary_loudness(read_wav(args.audio), block=args.block,
                               hop=args.hop)
    if args.normalize:
        curve = normalize_curve(curve)
    _write_text(args.out, loudness_curve_to_csv(curve))
    return 0


def _cmd_target(args) -> int:
    curve = loudness_curve_from_csv(_read_text(args.loudness))
    if not curve.normalized:
        curve = normalize_curve(curve)
    align = alignment_from_csv(_read_text(args.alignment))
    score = _load_score(args.score)
    target = sample_at_score_times(curve, align, score_onsets(score))
    _write_text(args.out, target_curve_to_csv(target))
    return 0


def _select_validation(pieces, seed: int, validation_count: int):
    if validation_count <= 0:
        return pieces, []
    if validation_count >= len(pieces):
        raise ValueError("validation_count leaves no training pieces")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    chosen = set(rng.choice(len(pieces), size=validation_count,
                            replace=False).tolist())
    train_pieces = [p for i, p in enumerate(pieces) if i not in chosen]
    val_pieces = [p for i, p in enumerate(pieces) if i in chosen]
    return train_pieces, val_pieces


def _cmd_train(args) -> int:
    config = _effective_config(args)
    pieces = _load_pieces(config)
    data = [(m, t) for _, m, t in pieces]
    train_data, val_data = _select_validation(
        data, config.train.seed, min(config.validation_count, len(data) - 1))
    params, vocab, log = train(config.kind, train_data, val_data,
                               config.train)
    out = Path(args.out)
    save_model(TrainedModel(kind=config.kind, params=params, vocab=vocab,
                            config=config.train), out)
    _write_text(out.with_suffix(".log.csv"), training_log_csv(log))
    return 0


def _cmd_loo(args) -> int:
    config = _effective_config(args)
    pieces = _load_pieces(config)
    validation_count = min(config.validation_count, len(pieces) - 2)
    reports = loo_cross_validation(pieces, config.kind, config.train,
                                   validation_count=validation_count,
                                   jobs=args.jobs)
    _write_text(args.out, report_csv(reports))
    sys.stdout.write(report_table(reports))
    return 0


def _cmd_fit(args) -> int:
    model = load_model(args.model)
    matrix = build_basis_matrix(_load_score(args.score))
    target = target_curve_from_csv(_read_text(args.target))
    config = model.config or TrainConfig()
    if args.max_epochs is not None:
        config = TrainConfig(**{**{f.name: getattr(config, f.name)
                                   for f in fields(TrainConfig)},
                                "max_epochs": args.max_epochs})
    X = model.vocab.transform(matrix)
    fitted = fit_to_performance(model.params, (X, target), config)
    save_model(TrainedModel(kind=model.kind, params=fitted,
                            vocab=model.vocab, config=config), args.out)
    return 0


def _graph_outputs(graph, score, out, top_k: int) -> None:
    out = Path(out)
    _write_text(out, graph_to_csv(graph))
    options = HeatmapOptions(
        top_k=top_k, time_signatures=score.parts[0].time_signatures)
    _write_text(out.with_suffix(".svg"), render_heatmap(graph, options))


def _cmd_sens(args) -> int:
    model = load_model(args.model)
    score = _load_score(args.score)
    matrix = build_basis_matrix(score)
    from .basis import BasisMatrix
    X = BasisMatrix(times=matrix.times, columns=list(model.vocab.columns),
                    data=model.vocab.transform(matrix),
                    fusion_spec=dict(matrix.fusion_spec))
    graph = sensitivity_graph(model.params, X)
    _graph_outputs(graph, score, args.out, args.top_k)
    return 0


def _cmd_compare(args) -> int:
    model_a = load_model(args.model_a)
    model_b = load_model(args.model_b)
    if model_a.vocab != model_b.vocab:
        raise ValueError("models were trained with different vocabularies")
    score = _load_score(args.score)
    matrix = build_basis_matrix(score)
    from .basis import BasisMatrix
    X = BasisMatrix(times=matrix.times, columns=list(model_a.vocab.columns),
                    data=model_a.vocab.transform(matrix),
                    fusion_spec=dict(matrix.fusion_spec))
    graph = sd_graph(model_a.params, model_b.params, X,
                     label_a=Path(args.model_a).stem,
                     label_b=Path(args.model_b).stem)
    _graph_outputs(graph, score, args.out, args.top_k)
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the training seed")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers where supported")
    common.add_argument("--config", default=None, help="project config file")

    parser = _Parser(prog="dynalens",
                     description="Model and compare loudness dynamics of "
                                 "ensemble performances.")
    parser.add_argument("--version", action="version",
                        version=f"dynalens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("parse", parents=[common],
                       help="dump a score in the debug text format")
    p.add_argument("score")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("basis", parents=[common],
                       help="write the descriptor matrix CSV and vocabulary")
    p.add_argument("score")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_basis)

    p = sub.add_parser("loudness", parents=[common],
                       help="block loudness of a WAV recording")
    p.add_argument("audio")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--block", type=int, default=1024)
    p.add_argument("--hop", type=int, default=1024)
    p.add_argument("--normalize", action="store_true",
                   help="z-normalize per recording")
    p.set_defaults(func=_cmd_loudness)

    p = sub.add_parser("target", parents=[common],
                       help="sample a loudness curve on the score onset grid")
    p.add_argument("loudness")
    p.add_argument("alignment")
    p.add_argument("score")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_target)

    p = sub.add_parser("train", parents=[common],
                       help="train a model on the configured pieces")
    p.add_argument("--kind", choices=("lin", "ffnn", "birnn"), default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("loo", parents=[common],
                       help="leave-one-out evaluation over the configured "
                            "pieces")
    p.add_argument("--kind", choices=("lin", "ffnn", "birnn"), default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_loo)

    p = sub.add_parser("fit", parents=[common],
                       help="fine-tune a pretrained model to one performance")
    p.add_argument("model")
    p.add_argument("score")
    p.add_argument("target")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--max-epochs", type=int, default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sens", parents=[common],
                       help="contribution graph of a model on a score")
    p.add_argument("model")
    p.add_argument("score")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--top-k", type=int, default=12)
    p.set_defaults(func=_cmd_sens)

    p = sub.add_parser("compare", parents=[common],
                       help="contribution difference of two fitted models")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("score")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--top-k", type=int, default=12)
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"dynalens: usage error: {exc}\n")
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except DivergenceError as exc:
        sys.stderr.write(f"dynalens: numerical error: {exc}\n")
        return 3
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"dynalens: numerical error: {exc}\n")
        return 3
    except (ScoreError, OSError, ValueError, KeyError,
            configparser.Error) as exc:
        sys.stderr.write(f"dynalens: input error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
