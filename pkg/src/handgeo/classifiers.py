"""Classifier families: nearest neighbour, LM-trained MLP, committee, RBF.

All classifiers operate on 9-dimensional feature vectors scaled to [-1, 1]
and decide closed-set identity by argmax (or minimum distance). Training is
deterministic given the seed; ties always break toward the lowest person id
so repeated runs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, TrainingError
from .features import ScalerParams

DEFAULT_HIDDEN = 30
DEFAULT_GAMMA = 0.8
DEFAULT_DAMPING_INIT = 1e-3
DEFAULT_DAMPING_FACTOR = 10.0
DEFAULT_MULTISTART = 5
_MAX_RETRIES = 10


# -- distances (template matching) -------------------------------------------


def dist_mse(x: np.ndarray, y: np.ndarray) -> float:
    """Sum of squared component differences (no normalization)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.dot(d, d))


def dist_mad(x: np.ndarray, y: np.ndarray) -> float:
    """Sum of absolute component differences."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.abs(x - y).sum())


_METRICS = {"mse": dist_mse, "mad": dist_mad}


@dataclass
class TemplateDb:
    """One stored template per training image: (person-id, feature vector)."""

    entries: list[tuple[int, np.ndarray]]
    scaler: ScalerParams | None = None


def nn_identify(x: np.ndarray, db: TemplateDb, metric: str = "mse") -> int:
    """Person of the closest template; ties break to the lowest person id,
    then the lowest template index."""
    if metric not in _METRICS:
        raise ConfigError(f"unknown metric {metric!r}; use 'mse' or 'mad'")
    if not db.entries:
        raise ValueError("empty template database")
    dist = _METRICS[metric]
    best = min(
        ((dist(x, vec), person, idx) for idx, (person, vec) in enumerate(db.entries)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    return best[1]


# -- training losses ----------------------------------------------------------


def loss_mse(targets: np.ndarray, outputs: np.ndarray) -> float:
    """Mean squared error over every output component of every sample."""
    t, a = np.asarray(targets, dtype=float), np.asarray(outputs, dtype=float)
    if t.shape != a.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {a.shape}")
    return float(np.mean((t - a) ** 2))


def loss_msereg(
    targets: np.ndarray, outputs: np.ndarray, weights: np.ndarray, gamma: float
) -> float:
    """gamma * MSE + (1 - gamma) * mean squared parameter (biases included)."""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma {gamma} outside [0, 1]")
    w = np.asarray(weights, dtype=float).ravel()
    return gamma * loss_mse(targets, outputs) + (1.0 - gamma) * float(np.mean(w**2))


@dataclass
class TrainConfig:
    """Levenberg-Marquardt training knobs.

    epochs defaults to 10 for the plain MSE loss and 50 when regularizing.
    """

    loss: str = "mse"
    epochs: int | None = None
    gamma: float = DEFAULT_GAMMA
    multistart: int = DEFAULT_MULTISTART
    damping_init: float = DEFAULT_DAMPING_INIT
    damping_factor: float = DEFAULT_DAMPING_FACTOR
    seed: int = 0

    def __post_init__(self) -> None:
        if self.loss not in ("mse", "msereg"):
            raise ConfigError(f"unknown loss {self.loss!r}; use 'mse' or 'msereg'")
        if self.epochs is None:
            self.epochs = 10 if self.loss == "mse" else 50
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma {self.gamma} outside [0, 1]")
        if self.multistart < 1:
            raise ConfigError(f"multistart count must be >= 1, got {self.multistart}")
        if self.damping_init <= 0 or self.damping_factor <= 1:
            raise ConfigError("damping_init must be > 0 and damping_factor > 1")


# -- multilayer perceptron ----------------------------------------------------


@dataclass(eq=False)
class MlpModel:
    """9 -> hidden (tanh) -> persons (linear) network."""

    person_ids: tuple[int, ...]
    w1: np.ndarray  # hidden x 9
    b1: np.ndarray  # hidden
    w2: np.ndarray  # persons x hidden
    b2: np.ndarray  # persons
    config: TrainConfig
    loss_history: tuple[float, ...] = ()
    scaler: ScalerParams | None = None

    def outputs(self, x: np.ndarray) -> np.ndarray:
        """Network output vector(s); accepts one vector or a batch."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hidden = np.tanh(x @ self.w1.T + self.b1)
        out = hidden @ self.w2.T + self.b2
        return out[0] if out.shape[0] == 1 else out


def _targets(labels: np.ndarray, person_ids: tuple[int, ...]) -> np.ndarray:
    """+1 at the true person's component, -1 elsewhere."""
    t = -np.ones((len(labels), len(person_ids)))
    index = {p: i for i, p in enumerate(person_ids)}
    for n, lab in enumerate(labels):
        t[n, index[int(lab)]] = 1.0
    return t


def _unpack(theta: np.ndarray, hidden: int, n_in: int, n_out: int):
    h9 = hidden * n_in
    w1 = theta[:h9].reshape(hidden, n_in)
    b1 = theta[h9 : h9 + hidden]
    w2 = theta[h9 + hidden : h9 + hidden + n_out * hidden].reshape(n_out, hidden)
    b2 = theta[h9 + hidden + n_out * hidden :]
    return w1, b1, w2, b2


def _forward(theta: np.ndarray, x: np.ndarray, hidden: int, n_out: int):
    w1, b1, w2, b2 = _unpack(theta, hidden, x.shape[1], n_out)
    a1 = np.tanh(x @ w1.T + b1)
    return a1 @ w2.T + b2, a1, w2


def _residuals(theta, x, t, hidden, gamma, reg_scale):
    """Stacked residual vector whose squared sum is the training loss."""
    n_out = t.shape[1]
    out, a1, _ = _forward(theta, x, hidden, n_out)
    data_scale = np.sqrt(gamma / t.size)
    r = data_scale * (t - out).ravel()
    if reg_scale:
        r = np.concatenate([r, reg_scale * theta])
    return r


def _jacobian(theta, x, t, hidden, gamma, reg_scale):
    """Analytic Jacobian of _residuals with respect to theta."""
    n, n_in = x.shape
    n_out = t.shape[1]
    _, a1, w2 = _forward(theta, x, hidden, n_out)
    d1 = 1.0 - a1**2  # tanh'
    eye = np.arange(n_out)

    dw1 = np.einsum("ch,nh,ni->nchi", w2, d1, x).reshape(n, n_out, hidden * n_in)
    db1 = np.einsum("ch,nh->nch", w2, d1)
    dw2 = np.zeros((n, n_out, n_out, hidden))
    dw2[:, eye, eye, :] = a1[:, None, :]
    dw2 = dw2.reshape(n, n_out, n_out * hidden)
    db2 = np.zeros((n, n_out, n_out))
    db2[:, eye, eye] = 1.0

    data_scale = np.sqrt(gamma / t.size)
    j = -data_scale * np.concatenate([dw1, db1, dw2, db2], axis=2).reshape(
        n * n_out, theta.size
    )
    if reg_scale:
        j = np.vstack([j, reg_scale * np.eye(theta.size)])
    return j


def mlp_train(
    train: list[tuple[int, np.ndarray]],
    cfg: TrainConfig,
    hidden: int = DEFAULT_HIDDEN,
) -> MlpModel:
    """Levenberg-Marquardt training from a uniform [-0.5, 0.5] initialization.

    Each epoch makes at most one accepted parameter update: the damped
    normal equations are solved and the step kept only if the loss drops,
    otherwise the damping grows and the solve is retried within the epoch.
    """
    if not train:
        raise ConfigError("empty training set")
    labels = np.array([p for p, _ in train])
    x = np.array([np.asarray(v, dtype=float) for _, v in train])
    person_ids = tuple(sorted(set(int(p) for p in labels)))
    t = _targets(labels, person_ids)
    n_in, n_out = x.shape[1], t.shape[1]
    n_params = hidden * n_in + hidden + n_out * hidden + n_out

    gamma = cfg.gamma if cfg.loss == "msereg" else 1.0
    reg_scale = np.sqrt((1.0 - gamma) / n_params) if gamma < 1.0 else 0.0

    rng = np.random.default_rng(cfg.seed)
    theta = rng.uniform(-0.5, 0.5, n_params)

    def loss_of(th: np.ndarray) -> float:
        r = _residuals(th, x, t, hidden, gamma, reg_scale)
        return float(r @ r)

    lam = cfg.damping_init
    history = [loss_of(theta)]
    identity = np.eye(n_params)
    for _ in range(cfg.epochs):
        r = _residuals(theta, x, t, hidden, gamma, reg_scale)
        j = _jacobian(theta, x, t, hidden, gamma, reg_scale)
        jtj = j.T @ j
        jtr = j.T @ r
        current = history[-1]
        for _ in range(1 + _MAX_RETRIES):
            try:
                delta = np.linalg.solve(jtj + lam * identity, -jtr)
            except np.linalg.LinAlgError as exc:
                raise TrainingError(f"normal equations singular at damping {lam}") from exc
            candidate = theta + delta
            new_loss = loss_of(candidate)
            if new_loss < current:
                theta = candidate
                lam /= cfg.damping_factor
                history.append(new_loss)
                break
            lam *= cfg.damping_factor
    w1, b1, w2, b2 = _unpack(theta, hidden, n_in, n_out)
    return MlpModel(
        person_ids=person_ids,
        w1=w1.copy(),
        b1=b1.copy(),
        w2=w2.copy(),
        b2=b2.copy(),
        config=cfg,
        loss_history=tuple(history),
    )


def mlp_identify(model: MlpModel, x: np.ndarray) -> int:
    """Person with the largest output; ties break to the lowest id."""
    return model.person_ids[int(np.argmax(model.outputs(x)))]


def _identification_rate(model: MlpModel, data: list[tuple[int, np.ndarray]]) -> float:
    correct = sum(mlp_identify(model, v) == p for p, v in data)
    return correct / len(data)


def train_members(
    train: list[tuple[int, np.ndarray]],
    cfg: TrainConfig,
    hidden: int = DEFAULT_HIDDEN,
) -> list[MlpModel]:
    """The multi-start population: one model per seed cfg.seed + 0..K-1."""
    members = []
    failure: TrainingError | None = None
    for k in range(cfg.multistart):
        run_cfg = TrainConfig(
            loss=cfg.loss,
            epochs=cfg.epochs,
            gamma=cfg.gamma,
            multistart=cfg.multistart,
            damping_init=cfg.damping_init,
            damping_factor=cfg.damping_factor,
            seed=cfg.seed + k,
        )
        try:
            members.append(mlp_train(train, run_cfg, hidden))
        except TrainingError as exc:
            failure = exc
    if not members:
        raise TrainingError(f"all {cfg.multistart} starts failed: {failure}")
    return members


def multistart_select(
    members: list[MlpModel], train: list[tuple[int, np.ndarray]]
) -> MlpModel:
    """Member with the highest training-set rate; ties keep the lowest seed."""
    rates = [_identification_rate(m, train) for m in members]
    return members[int(np.argmax(rates))]


def multistart_train(
    train: list[tuple[int, np.ndarray]],
    cfg: TrainConfig,
    hidden: int = DEFAULT_HIDDEN,
) -> MlpModel:
    """Train K models from consecutive seeds and keep the best on training data."""
    return multistart_select(train_members(train, cfg, hidden), train)


def committee_identify(models: list[MlpModel], x: np.ndarray) -> int:
    """Argmax of the component-wise mean of the members' output vectors."""
    if not models:
        raise ValueError("empty committee")
    ids = models[0].person_ids
    if any(m.person_ids != ids for m in models):
        raise ValueError("committee members disagree on the output classes")
    mean = np.mean([m.outputs(x) for m in models], axis=0)
    return ids[int(np.argmax(mean))]


# -- radial basis function network --------------------------------------------


@dataclass(eq=False)
class RbfModel:
    """Gaussian-kernel network: centres, common spread, linear output weights."""

    person_ids: tuple[int, ...]
    centres: np.ndarray  # k x 9
    spread: float
    weights: np.ndarray  # persons x k
    requested_centres: int
    scaler: ScalerParams | None = None

    def outputs(self, x: np.ndarray) -> np.ndarray:
        phi = _kernel(np.atleast_2d(np.asarray(x, dtype=float)), self.centres, self.spread)
        out = phi @ self.weights.T
        return out[0] if out.shape[0] == 1 else out


def _kernel(x: np.ndarray, centres: np.ndarray, spread: float) -> np.ndarray:
    sq = ((x[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-sq / (2.0 * spread**2))


def median_pairwise_distance(x: np.ndarray) -> float:
    diffs = x[:, None, :] - x[None, :, :]
    d = np.sqrt((diffs**2).sum(axis=2))
    upper = d[np.triu_indices(len(x), k=1)]
    return float(np.median(upper))


def rbf_train(
    train: list[tuple[int, np.ndarray]],
    n_centres: int,
    spread: float | None = None,
) -> RbfModel:
    """Greedy orthogonal centre selection, then least-squares output weights.

    Candidate centres are the training points; each step adds the candidate
    whose kernel column explains the most remaining target energy. A
    rank-deficient design stops selection early at the achieved count.
    """
    if not train:
        raise ConfigError("empty training set")
    labels = np.array([p for p, _ in train])
    x = np.array([np.asarray(v, dtype=float) for _, v in train])
    n = len(x)
    if not 1 <= n_centres <= n:
        raise ConfigError(f"n_centres {n_centres} outside [1, {n}]")
    person_ids = tuple(sorted(set(int(p) for p in labels)))
    t = _targets(labels, person_ids)

    if spread is None:
        spread = median_pairwise_distance(x)
    if not spread > 0:
        raise TrainingError("kernel spread must be positive (duplicate training points?)")

    phi = _kernel(x, x, spread)
    residual = phi.copy()  # candidate columns, orthogonalized against picks
    t_proj = t.copy()
    norms0 = (phi**2).sum(axis=0)
    chosen: list[int] = []
    for _ in range(n_centres):
        colsq = (residual**2).sum(axis=0)
        eligible = np.ones(n, dtype=bool)
        eligible[chosen] = False
        eligible &= colsq > 1e-12 * norms0
        if not eligible.any():
            break  # remaining candidates are linearly dependent
        energy = ((residual.T @ t_proj) ** 2).sum(axis=1)
        scores = np.where(eligible, energy / np.where(colsq > 0, colsq, 1.0), -np.inf)
        pick = int(np.argmax(scores))
        chosen.append(pick)
        q = residual[:, pick] / np.sqrt(colsq[pick])
        residual -= np.outer(q, q @ residual)
        t_proj -= np.outer(q, q @ t_proj)

    centres = x[chosen]
    design = _kernel(x, centres, spread)
    weights, *_ = np.linalg.lstsq(design, t, rcond=None)
    return RbfModel(
        person_ids=person_ids,
        centres=centres.copy(),
        spread=float(spread),
        weights=weights.T.copy(),
        requested_centres=n_centres,
    )


def rbf_identify(model: RbfModel, x: np.ndarray) -> int:
    """Person with the largest output; ties break to the lowest id."""
    return model.person_ids[int(np.argmax(model.outputs(x)))]


# -- plain-text model files ----------------------------------------------------


def _fmt(values: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(values, dtype=float).ravel())


def _scaler_lines(scaler: ScalerParams | None) -> list[str]:
    if scaler is None:
        return ["scaler 0"]
    return ["scaler 1", f"scaler_min {_fmt(scaler.mins)}", f"scaler_max {_fmt(scaler.maxs)}"]


def save_model(model: MlpModel | RbfModel | TemplateDb, path: str | Path) -> None:
    """Plain-text serialization; floats carry 17 significant digits."""
    lines = ["handgeo-model 1"]
    if isinstance(model, MlpModel):
        cfg = model.config
        h, n_in = model.w1.shape
        lines += [
            "type mlp",
            f"person_ids {' '.join(str(p) for p in model.person_ids)}",
            f"inputs {n_in}",
            f"hidden {h}",
            f"loss {cfg.loss}",
            f"epochs {cfg.epochs}",
            f"gamma {cfg.gamma:.17g}",
            f"multistart {cfg.multistart}",
            f"damping_init {cfg.damping_init:.17g}",
            f"damping_factor {cfg.damping_factor:.17g}",
            f"seed {cfg.seed}",
            f"loss_history {_fmt(np.array(model.loss_history))}",
        ]
        lines += _scaler_lines(model.scaler)
        lines += [f"w1 {_fmt(model.w1)}", f"b1 {_fmt(model.b1)}"]
        lines += [f"w2 {_fmt(model.w2)}", f"b2 {_fmt(model.b2)}"]
    elif isinstance(model, RbfModel):
        k = len(model.centres)
        lines += [
            "type rbf",
            f"person_ids {' '.join(str(p) for p in model.person_ids)}",
            f"inputs {model.centres.shape[1] if k else 0}",
            f"centres {k}",
            f"requested {model.requested_centres}",
            f"spread {model.spread:.17g}",
        ]
        lines += _scaler_lines(model.scaler)
        lines += [f"centre_rows {_fmt(model.centres)}", f"weights {_fmt(model.weights)}"]
    elif isinstance(model, TemplateDb):
        lines += ["type nn", f"entries {len(model.entries)}"]
        lines += _scaler_lines(model.scaler)
        for person, vec in model.entries:
            lines.append(f"template {person} {_fmt(vec)}")
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MlpModel | RbfModel | TemplateDb:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("handgeo-model"):
        raise ConfigError(f"{path} is not a model file")
    fields: dict[str, str] = {}
    templates: list[tuple[int, np.ndarray]] = []
    for line in text[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(" ")
        if key == "template":
            person, _, rest = value.partition(" ")
            templates.append((int(person), np.array([float(v) for v in rest.split()])))
        else:
            fields[key] = value

    def arr(key: str) -> np.ndarray:
        return np.array([float(v) for v in fields[key].split()])

    scaler = None
    if fields.get("scaler") == "1":
        scaler = ScalerParams(mins=arr("scaler_min"), maxs=arr("scaler_max"))

    kind = fields["type"]
    if kind == "nn":
        return TemplateDb(entries=templates, scaler=scaler)
    person_ids = tuple(int(v) for v in fields["person_ids"].split())
    n_in = int(fields["inputs"])
    if kind == "mlp":
        h = int(fields["hidden"])
        cfg = TrainConfig(
            loss=fields["loss"],
            epochs=int(fields["epochs"]),
            gamma=float(fields["gamma"]),
            multistart=int(fields["multistart"]),
            damping_init=float(fields["damping_init"]),
            damping_factor=float(fields["damping_factor"]),
            seed=int(fields["seed"]),
        )
        return MlpModel(
            person_ids=person_ids,
            w1=arr("w1").reshape(h, n_in),
            b1=arr("b1"),
            w2=arr("w2").reshape(len(person_ids), h),
            b2=arr("b2"),
            config=cfg,
            loss_history=tuple(arr("loss_history")),
            scaler=scaler,
        )
    if kind == "rbf":
        k = int(fields["centres"])
        return RbfModel(
            person_ids=person_ids,
            centres=arr("centre_rows").reshape(k, n_in),
            spread=float(fields["spread"]),
            weights=arr("weights").reshape(len(person_ids), k),
            requested_centres=int(fields["requested"]),
            scaler=scaler,
        )
    raise ConfigError(f"unknown model type {kind!r} in {path}")
