"""Identification protocol: fixed split, template database, rates, reports.

Per person, the first half of the samples enrolls the classifiers and the
second half is tested closed-set: every test vector is compared against all
models and the argmax (or minimum distance) names the person. The report
carries one row per classifier family plus the trial accounting and the
configuration echo, and is stable byte for byte for fixed seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classifiers import (
    DEFAULT_GAMMA,
    DEFAULT_HIDDEN,
    DEFAULT_MULTISTART,
    MlpModel,
    RbfModel,
    TemplateDb,
    TrainConfig,
    committee_identify,
    mlp_identify,
    multistart_select,
    nn_identify,
    rbf_identify,
    rbf_train,
    train_members,
)
from .errors import ConfigError, HandGeoError
from .features import apply_scaler, fit_scaler
from .pipeline import ExtractionSettings, extract
from .synthgen import Corpus

COMMITTEE_SIZE = 3
DEFAULT_RBF_CENTRES = 50

#: Report rows in table order.
ROW_LABELS = (
    ("nn_mad", "NN-MAD"),
    ("nn_mse", "NN-MSE"),
    ("mlp_mse", "MLP-MSE"),
    ("mlp_msereg", "MLP-MSEREG"),
    ("committee_mse", "Committee-MSE"),
    ("committee_msereg", "Committee-MSEREG"),
    ("rbf", "RBF"),
)


@dataclass(frozen=True)
class Split:
    """Per-person sample indices used for enrollment and for testing."""

    train_indices: tuple[int, ...] = (0, 1, 2, 3, 4)
    test_indices: tuple[int, ...] = (5, 6, 7, 8, 9)

    def __post_init__(self) -> None:
        overlap = set(self.train_indices) & set(self.test_indices)
        if overlap:
            raise ConfigError(f"split halves overlap on sample indices {sorted(overlap)}")
        if not self.train_indices or not self.test_indices:
            raise ConfigError("both split halves need at least one sample index")


def count_trials(n_persons: int, n_test_per_person: int) -> tuple[int, int, int]:
    """(client trials, impostor trials, total) of the closed-set protocol."""
    clients = n_persons * n_test_per_person
    impostors = n_persons * (n_persons - 1) * n_test_per_person
    return clients, impostors, clients + impostors


Entry = tuple[int, int, np.ndarray]  # person, sample, feature vector


def extract_features(
    corpus: Corpus, settings: ExtractionSettings | None = None
) -> tuple[list[Entry], list[tuple[int, int, str]]]:
    """Run the pipeline over every corpus image.

    Returns extracted entries and the failures as (person, sample,
    "category: message") records; failed images are simply absent from the
    entries.
    """
    entries: list[Entry] = []
    failures: list[tuple[int, int, str]] = []
    for p, row in enumerate(corpus.images):
        for j, img in enumerate(row):
            try:
                entries.append((p, j, extract(img, settings).vector))
            except HandGeoError as exc:
                failures.append((p, j, f"{exc.category}: {exc}"))
    return entries, failures


def split_entries(entries: list[Entry], split: Split) -> tuple[list[Entry], list[Entry]]:
    train = [e for e in entries if e[1] in split.train_indices]
    test = [e for e in entries if e[1] in split.test_indices]
    return train, test


def run_identification(decide: Callable[[np.ndarray], int], test: list[Entry]) -> float:
    """Percentage of test vectors whose decision names the true person."""
    if not test:
        raise ConfigError("no test samples to identify")
    correct = sum(decide(vec) == person for person, _, vec in test)
    return 100.0 * correct / len(test)


@dataclass
class EvalReport:
    rates: dict[str, float]
    clients: int
    impostors: int
    total: int
    exclusions: int
    config: dict[str, str] = field(default_factory=dict)
    sweep: list[tuple[int, float]] | None = None


def evaluate_all(
    corpus: Corpus,
    split: Split | None = None,
    settings: ExtractionSettings | None = None,
    *,
    train_seed: int = 0,
    gamma: float | None = None,
    multistart: int | None = None,
    hidden: int = DEFAULT_HIDDEN,
    rbf_centres: int = DEFAULT_RBF_CENTRES,
    rbf_spread: float | None = None,
) -> EvalReport:
    """Train and test every classifier family on one corpus split."""
    entries, failures = extract_features(corpus, settings)
    corpus_info = {
        "corpus_seed": str(corpus.master_seed),
        "intra_sigma": f"{corpus.intra_sigma:.17g}",
        "noise_level": f"{corpus.noise_level:.17g}",
        "persons": str(len(corpus.images)),
        "samples_per_person": str(len(corpus.images[0]) if corpus.images else 0),
    }
    return evaluate_features(
        entries,
        split,
        exclusions=len(failures),
        extra_config=corpus_info,
        n_persons=len(corpus.images),
        train_seed=train_seed,
        gamma=gamma,
        multistart=multistart,
        hidden=hidden,
        rbf_centres=rbf_centres,
        rbf_spread=rbf_spread,
    )


def evaluate_features(
    entries: list[Entry],
    split: Split | None = None,
    *,
    exclusions: int = 0,
    extra_config: dict[str, str] | None = None,
    n_persons: int | None = None,
    train_seed: int = 0,
    gamma: float | None = None,
    multistart: int | None = None,
    hidden: int = DEFAULT_HIDDEN,
    rbf_centres: int = DEFAULT_RBF_CENTRES,
    rbf_spread: float | None = None,
) -> EvalReport:
    """The classifier protocol on already-extracted feature entries."""
    split = split or Split()
    train_e, test_e = split_entries(entries, split)
    if not train_e or not test_e:
        raise ConfigError("the split left one half of the corpus empty")

    scaler = fit_scaler(np.array([v for _, _, v in train_e]))
    train_s = [(p, j, apply_scaler(scaler, v)) for p, j, v in train_e]
    test_s = [(p, j, apply_scaler(scaler, v)) for p, j, v in test_e]
    train_pairs = [(p, v) for p, _, v in train_s]

    base = TrainConfig(
        seed=train_seed,
        gamma=DEFAULT_GAMMA if gamma is None else gamma,
        multistart=DEFAULT_MULTISTART if multistart is None else multistart,
    )

    db = TemplateDb(entries=train_pairs, scaler=scaler)
    rates: dict[str, float] = {}
    rates["nn_mad"] = run_identification(lambda v: nn_identify(v, db, "mad"), test_s)
    rates["nn_mse"] = run_identification(lambda v: nn_identify(v, db, "mse"), test_s)

    members: dict[str, list[MlpModel]] = {}
    for loss in ("mse", "msereg"):
        cfg = TrainConfig(
            loss=loss, gamma=base.gamma, multistart=base.multistart, seed=train_seed
        )
        members[loss] = train_members(train_pairs, cfg, hidden)
        best = multistart_select(members[loss], train_pairs)
        rates[f"mlp_{loss}"] = run_identification(lambda v, m=best: mlp_identify(m, v), test_s)
        committee = members[loss][:COMMITTEE_SIZE]
        rates[f"committee_{loss}"] = run_identification(
            lambda v, c=committee: committee_identify(c, v), test_s
        )

    n_centres = min(rbf_centres, len(train_pairs))
    rbf = rbf_train(train_pairs, n_centres, rbf_spread)
    rates["rbf"] = run_identification(lambda v: rbf_identify(rbf, v), test_s)

    persons = n_persons if n_persons is not None else len({p for p, _, _ in entries})
    clients, impostors, total = count_trials(persons, len(split.test_indices))
    cfg_echo = dict(extra_config or {})
    cfg_echo.update(
        {
            "train_indices": " ".join(str(i) for i in split.train_indices),
            "test_indices": " ".join(str(i) for i in split.test_indices),
            "train_seed": str(train_seed),
            "gamma": f"{base.gamma:.17g}",
            "epochs_mse": "10",
            "epochs_msereg": "50",
            "multistart": str(base.multistart),
            "committee_size": str(COMMITTEE_SIZE),
            "hidden": str(hidden),
            "rbf_centres": str(len(rbf.centres)),
            "rbf_spread": f"{rbf.spread:.17g}",
        }
    )
    return EvalReport(
        rates=rates,
        clients=clients,
        impostors=impostors,
        total=total,
        exclusions=exclusions,
        config=cfg_echo,
    )


def sweep_rbf(
    corpus: Corpus,
    split: Split | None = None,
    centre_counts: tuple[int, ...] = tuple(range(5, 111, 5)),
    spread: float | None = None,
    settings: ExtractionSettings | None = None,
) -> list[tuple[int, float]]:
    """Identification rate per RBF centre count on a fixed split."""
    entries, _ = extract_features(corpus, settings)
    return sweep_rbf_features(entries, split, centre_counts, spread)


def sweep_rbf_features(
    entries: list[Entry],
    split: Split | None = None,
    centre_counts: tuple[int, ...] = tuple(range(5, 111, 5)),
    spread: float | None = None,
) -> list[tuple[int, float]]:
    """Identification rate per RBF centre count on extracted features."""
    split = split or Split()
    train_e, test_e = split_entries(entries, split)
    scaler = fit_scaler(np.array([v for _, _, v in train_e]))
    train_pairs = [(p, apply_scaler(scaler, v)) for p, _, v in train_e]
    test_s = [(p, j, apply_scaler(scaler, v)) for p, j, v in test_e]

    curve: list[tuple[int, float]] = []
    for k in centre_counts:
        model = rbf_train(train_pairs, min(k, len(train_pairs)), spread)
        rate = run_identification(lambda v: rbf_identify(model, v), test_s)
        curve.append((k, rate))
    return curve


def emit_table(report: EvalReport) -> tuple[str, str]:
    """(aligned text, CSV) renderings of the report."""
    lines = ["Identification rate (%)", "-" * 38]
    known = {key for key, _ in ROW_LABELS}
    for key, label in ROW_LABELS:
        if key in report.rates:
            lines.append(f"{label:<22}{report.rates[key]:>12.2f}")
    for key in report.rates:
        if key not in known:
            lines.append(f"{key:<22}{report.rates[key]:>12.2f}")
    lines += [
        "-" * 38,
        f"{'Client trials':<22}{report.clients:>12}",
        f"{'Impostor trials':<22}{report.impostors:>12}",
        f"{'Total trials':<22}{report.total:>12}",
        f"{'Excluded extractions':<22}{report.exclusions:>12}",
        "",
        "Configuration:",
    ]
    lines += [f"  {k} = {v}" for k, v in report.config.items()]
    if report.sweep:
        lines += ["", "RBF centre sweep (centres, rate %):"]
        lines += [f"  {k:>4}  {r:.2f}" for k, r in report.sweep]
    text = "\n".join(lines) + "\n"

    rows = ["key,value"]
    for key, _ in ROW_LABELS:
        if key in report.rates:
            rows.append(f"rate_{key},{report.rates[key]:.17g}")
    for key in report.rates:
        if key not in known:
            rows.append(f"rate_{key},{report.rates[key]:.17g}")
    rows += [
        f"clients,{report.clients}",
        f"impostors,{report.impostors}",
        f"total,{report.total}",
        f"exclusions,{report.exclusions}",
    ]
    rows += [f"{k},{v}" for k, v in report.config.items()]
    if report.sweep:
        rows += [f"sweep_{k},{r:.17g}" for k, r in report.sweep]
    csv_text = "\n".join(rows) + "\n"
    return text, csv_text
