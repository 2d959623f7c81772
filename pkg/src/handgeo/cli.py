"""Command-line interface for batch use of the hand-geometry toolkit.

Commands
--------
gen      draw a synthetic corpus and write it as a directory tree
extract  run the measurement pipeline on one BMP or a corpus tree -> CSV
train    fit one classifier on a features CSV -> model file
eval     run the full identification protocol (or pre-trained models) -> report
sweep    identification rate per RBF centre count -> curve CSV

Every flag mirrors a config-file key of the same name (hyphens become
underscores); ``--config FILE`` reads plain ``key=value`` lines and explicit
flags override the file.  On failure each command exits nonzero after printing
one ``category: message`` line to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import (
    DEFAULT_GAMMA,
    DEFAULT_HIDDEN,
    DEFAULT_MULTISTART,
    MlpModel,
    RbfModel,
    TemplateDb,
    TrainConfig,
    load_model,
    mlp_identify,
    multistart_train,
    nn_identify,
    rbf_identify,
    rbf_train,
    save_model,
)
from .errors import ConfigError, HandGeoError
from .evaluation import (
    DEFAULT_RBF_CENTRES,
    EvalReport,
    Split,
    count_trials,
    emit_table,
    evaluate_features,
    extract_features,
    run_identification,
    split_entries,
    sweep_rbf_features,
)
from .features import apply_scaler, fit_scaler, load_features, save_features
from .imaging import load_bmp
from .pipeline import ExtractionSettings, extract
from .synthgen import load_corpus, make_corpus, save_corpus

DEFAULT_SWEEP_CENTRES = ",".join(str(k) for k in range(5, 111, 5))


@dataclass
class RunConfig:
    """Merged command settings: defaults, then config file, then flags."""

    command: str
    values: dict[str, object] = field(default_factory=dict)

    def __getattr__(self, key: str) -> object:
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None


def _read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


#: key -> (cast from string, default, help); None default means "required
#: unless the command treats absence itself".
_OPTIONS: dict[str, dict[str, tuple]] = {
    "gen": {
        "out": (str, None, "corpus output directory"),
        "seed": (int, 0, "master seed for the corpus draw"),
        "intra_sigma": (float, 0.03, "relative within-person jitter"),
        "persons": (int, 22, "number of persons"),
        "samples": (int, 10, "samples per person"),
        "noise_level": (float, 0.03, "uniform pixel noise amplitude"),
        "dpi": (float, 100.0, "render resolution"),
    },
    "extract": {
        "input": (str, None, "BMP file or corpus directory"),
        "out": (str, None, "features CSV to write"),
        "threshold": (float, 0.07, "binarization threshold"),
        "sigma": (float, 1.0, "LoG smoothing width"),
        "kernel_radius": (int, 1, "box-filter radius (0 disables)"),
        "person": (int, 0, "person id recorded for a single image"),
        "sample": (int, 0, "sample index recorded for a single image"),
    },
    "train": {
        "features": (str, None, "features CSV with person,sample columns"),
        "out": (str, None, "model file to write"),
        "kind": (str, "mlp", "classifier family: nn, mlp or rbf"),
        "loss": (str, "mse", "mlp loss: mse or msereg"),
        "epochs": (int, None, "mlp epochs (defaults per loss)"),
        "gamma": (float, DEFAULT_GAMMA, "msereg performance ratio"),
        "multistart": (int, DEFAULT_MULTISTART, "mlp random starts"),
        "seed": (int, 0, "first initialization seed"),
        "hidden": (int, DEFAULT_HIDDEN, "mlp hidden units"),
        "centres": (int, DEFAULT_RBF_CENTRES, "rbf centre count"),
        "spread": (float, None, "rbf kernel width (default: median distance)"),
    },
    "eval": {
        "corpus": (str, None, "corpus directory to evaluate"),
        "features": (str, None, "features CSV to evaluate"),
        "out": (str, None, "report output directory"),
        "models": (str, None, "comma-separated model files to score instead"),
        "metric": (str, "mse", "distance for nn model files: mse or mad"),
        "seed": (int, 0, "first training seed"),
        "gamma": (float, DEFAULT_GAMMA, "msereg performance ratio"),
        "multistart": (int, DEFAULT_MULTISTART, "mlp random starts"),
        "hidden": (int, DEFAULT_HIDDEN, "mlp hidden units"),
        "centres": (int, DEFAULT_RBF_CENTRES, "rbf centre count"),
        "spread": (float, None, "rbf kernel width"),
        "threshold": (float, 0.07, "binarization threshold"),
        "sigma": (float, 1.0, "LoG smoothing width"),
        "kernel_radius": (int, 1, "box-filter radius"),
    },
    "sweep": {
        "corpus": (str, None, "corpus directory to evaluate"),
        "features": (str, None, "features CSV to evaluate"),
        "out": (str, None, "curve CSV to write"),
        "centres": (str, DEFAULT_SWEEP_CENTRES, "comma-separated centre counts"),
        "spread": (float, None, "rbf kernel width"),
        "threshold": (float, 0.07, "binarization threshold"),
        "sigma": (float, 1.0, "LoG smoothing width"),
        "kernel_radius": (int, 1, "box-filter radius"),
    },
}

_HELP = {
    "gen": "generate a synthetic hand corpus",
    "extract": "extract features from a BMP image or corpus tree",
    "train": "train one classifier on extracted features",
    "eval": "run the identification protocol and write report files",
    "sweep": "write the RBF centre-count/rate curve",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handgeo", description="hand-geometry identification toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in _OPTIONS.items():
        p = sub.add_parser(command, help=_HELP[command])
        p.add_argument("--config", help="key=value config file; flags override it")
        for key, (cast, _default, help_text) in options.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, type=cast, default=None, help=help_text)
    return parser


def _merge(args: argparse.Namespace) -> RunConfig:
    options = _OPTIONS[args.command]
    from_file = _read_config_file(args.config) if args.config else {}
    unknown = set(from_file) - set(options)
    if unknown:
        raise ConfigError(
            f"unknown config key(s) for {args.command}: {', '.join(sorted(unknown))}"
        )
    values: dict[str, object] = {}
    for key, (cast, default, _help) in options.items():
        flag_value = getattr(args, key)
        if flag_value is not None:
            values[key] = flag_value
        elif key in from_file:
            try:
                values[key] = cast(from_file[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from None
        else:
            values[key] = default
    return RunConfig(command=args.command, values=values)


def _require(cfg: RunConfig, key: str) -> object:
    value = cfg.values.get(key)
    if value is None:
        raise ConfigError(f"{cfg.command} needs --{key.replace('_', '-')}")
    return value


def _settings(cfg: RunConfig) -> ExtractionSettings:
    return ExtractionSettings(
        threshold=cfg.threshold, kernel_radius=cfg.kernel_radius, sigma=cfg.sigma
    )


def _parse_centre_list(text: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"centre list must be comma-separated integers: {text!r}") from None
    if not counts or any(k < 1 for k in counts):
        raise ConfigError(f"centre counts must be positive: {text!r}")
    return counts


def _load_entries(cfg: RunConfig) -> tuple[list, int, dict[str, str]]:
    """Feature entries for eval/sweep from --corpus or --features, plus the
    corpus metadata to echo in reports (empty for CSV input)."""
    if (cfg.corpus is None) == (cfg.features is None):
        raise ConfigError(f"{cfg.command} needs exactly one of --corpus or --features")
    if cfg.corpus is not None:
        corpus = load_corpus(cfg.corpus)
        entries, failures = extract_features(corpus, _settings(cfg))
        for person, sample, message in failures:
            print(f"warning: person {person} sample {sample}: {message}", file=sys.stderr)
        info = {
            "corpus_seed": str(corpus.master_seed),
            "intra_sigma": f"{corpus.intra_sigma:.17g}",
            "noise_level": f"{corpus.noise_level:.17g}",
            "persons": str(len(corpus.images)),
            "samples_per_person": str(len(corpus.images[0]) if corpus.images else 0),
        }
        return entries, len(failures), info
    return load_features(cfg.features), 0, {}


def cmd_gen(cfg: RunConfig) -> int:
    out = Path(str(_require(cfg, "out")))
    corpus = make_corpus(
        cfg.seed,
        cfg.intra_sigma,
        persons=cfg.persons,
        samples=cfg.samples,
        noise_level=cfg.noise_level,
        dpi=cfg.dpi,
    )
    save_corpus(corpus, out)
    print(f"wrote {cfg.persons} persons x {cfg.samples} samples to {out}")
    return 0


def cmd_extract(cfg: RunConfig) -> int:
    source = Path(str(_require(cfg, "input")))
    out = Path(str(_require(cfg, "out")))
    settings = _settings(cfg)
    if source.is_dir():
        corpus = load_corpus(source)
        entries, failures = extract_features(corpus, settings)
        for person, sample, message in failures:
            print(f"warning: person {person} sample {sample}: {message}", file=sys.stderr)
    else:
        vector = extract(load_bmp(source), settings).vector
        entries, failures = [(cfg.person, cfg.sample, vector)], []
    save_features(out, entries)
    print(f"wrote {len(entries)} feature rows to {out} ({len(failures)} failed)")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    entries = load_features(str(_require(cfg, "features")))
    out = Path(str(_require(cfg, "out")))
    if not entries:
        raise ConfigError("the features file has no rows")
    scaler = fit_scaler(np.array([v for _, _, v in entries]))
    train_pairs = [(p, apply_scaler(scaler, v)) for p, _, v in entries]

    if cfg.kind == "nn":
        model: TemplateDb | MlpModel | RbfModel = TemplateDb(
            entries=train_pairs, scaler=scaler
        )
    elif cfg.kind == "mlp":
        train_cfg = TrainConfig(
            loss=cfg.loss,
            epochs=cfg.epochs,
            gamma=cfg.gamma,
            multistart=cfg.multistart,
            seed=cfg.seed,
        )
        model = multistart_train(train_pairs, train_cfg, cfg.hidden)
        model.scaler = scaler
    elif cfg.kind == "rbf":
        model = rbf_train(train_pairs, min(cfg.centres, len(train_pairs)), cfg.spread)
        model.scaler = scaler
    else:
        raise ConfigError(f"unknown classifier kind {cfg.kind!r}; use nn, mlp or rbf")
    save_model(model, out)
    print(f"wrote {cfg.kind} model trained on {len(entries)} rows to {out}")
    return 0


def _model_decider(model: TemplateDb | MlpModel | RbfModel, metric: str):
    if isinstance(model, TemplateDb):
        return lambda v: nn_identify(v, model, metric)
    if isinstance(model, MlpModel):
        return lambda v: mlp_identify(model, v)
    return lambda v: rbf_identify(model, v)


def _eval_models(cfg: RunConfig, entries: list, exclusions: int) -> EvalReport:
    """Score pre-trained model files on the test half of the split."""
    split = Split()
    _, test_e = split_entries(entries, split)
    if not test_e:
        raise ConfigError("the split left no test samples")
    rates: dict[str, float] = {}
    for path_text in str(cfg.models).split(","):
        path = Path(path_text.strip())
        model = load_model(path)
        decide = _model_decider(model, cfg.metric)
        scaler = model.scaler
        test_s = [
            (p, j, apply_scaler(scaler, v) if scaler is not None else v)
            for p, j, v in test_e
        ]
        rates[f"model:{path.stem}"] = run_identification(decide, test_s)
    persons = len({p for p, _, _ in entries})
    clients, impostors, total = count_trials(persons, len(split.test_indices))
    return EvalReport(
        rates=rates,
        clients=clients,
        impostors=impostors,
        total=total,
        exclusions=exclusions,
        config={"models": str(cfg.models), "metric": cfg.metric},
    )


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(str(_require(cfg, "out")))
    entries, exclusions, corpus_info = _load_entries(cfg)
    if cfg.models is not None:
        report = _eval_models(cfg, entries, exclusions)
    else:
        report = evaluate_features(
            entries,
            exclusions=exclusions,
            extra_config=corpus_info,
            n_persons=len({p for p, _, _ in entries}),
            train_seed=cfg.seed,
            gamma=cfg.gamma,
            multistart=cfg.multistart,
            hidden=cfg.hidden,
            rbf_centres=cfg.centres,
            rbf_spread=cfg.spread,
        )
    text, csv_text = emit_table(report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(csv_text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    out = Path(str(_require(cfg, "out")))
    entries, _, _ = _load_entries(cfg)
    counts = _parse_centre_list(str(cfg.centres))
    curve = sweep_rbf_features(entries, centre_counts=counts, spread=cfg.spread)
    lines = ["centres,rate"] + [f"{k},{r:.17g}" for k, r in curve]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    best = max(curve, key=lambda kr: kr[1])
    print(f"wrote {len(curve)} sweep points to {out}; best {best[1]:.2f}% at {best[0]} centres")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge(args)
        return _COMMANDS[cfg.command](cfg)
    except HandGeoError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
