"""Binary SVM (normal vs abnormal superpixels) trained by sequential
minimal optimization, with a self-contained, bit-exact model file format.

The model carries its own feature selection and standardization, so a
saved file is sufficient to reproduce predictions exactly.
"""

from __future__ import annotations

import random
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptModel,
    DimensionMismatch,
    InvalidParam,
    NotFound,
    SingleClass,
    VersionMismatch,
)

MODEL_MAGIC = "capseg-svm"
MODEL_VERSION = "v1"

# precomputing the Gram matrix is worth it up to roughly this many samples
_GRAM_LIMIT = 6000
_MIN_ALPHA_STEP = 1e-5
_SV_EPS = 1e-12


@dataclass
class SvmParams:
    kernel: str = "rbf"  # "linear" | "rbf"
    c: float = 1.0
    gamma: float | None = None  # None: 1/d
    tol: float = 1e-3
    max_passes: int = 5
    seed: int = 0
    max_iter: int = 2000  # hard cap on full passes; hitting it flags the model

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise InvalidParam(f"unknown kernel {self.kernel!r}")
        if self.c <= 0:
            raise InvalidParam("C must be > 0")
        if self.gamma is not None and self.gamma <= 0:
            raise InvalidParam("gamma must be > 0 or None for auto")
        if self.tol <= 0:
            raise InvalidParam("tol must be > 0")
        if self.max_passes < 1:
            raise InvalidParam("max_passes must be >= 1")


@dataclass
class SvmModel:
    kernel: str
    c: float
    gamma: float
    tol: float
    max_passes: int
    seed: int
    support_vectors: np.ndarray  # (M, d) in standardized space
    dual_coefs: np.ndarray  # (M,) alpha_i * y_i
    bias: float
    scaler_mean: np.ndarray  # (d,)
    scaler_std: np.ndarray  # (d,)
    selected: np.ndarray = field(default=None)  # column indices into predict input
    in_width: int = 0  # expected predict-time column count
    trained_for: int = 0  # superpixel count this model belongs to
    converged: bool = True


def _kernel_matrix(kernel: str, gamma: float, a: np.ndarray, b: np.ndarray):
    if kernel == "linear":
        return a @ b.T
    sq_a = (a * a).sum(axis=1)[:, None]
    sq_b = (b * b).sum(axis=1)[None, :]
    d2 = np.maximum(sq_a + sq_b - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * d2)


def svm_train(
    x: np.ndarray,
    y: np.ndarray,
    params: SvmParams | None = None,
    selected: np.ndarray | None = None,
    in_width: int | None = None,
    trained_for: int = 0,
) -> SvmModel:
    """Train on an N x d matrix with binary labels (1 = abnormal).

    `selected` records which columns of the (wider) predict-time input the
    d training columns correspond to; it defaults to the identity, in which
    case predict expects d columns.
    """
    params = params or SvmParams()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidParam("x must be (N, d) with one label per row")
    n, d = x.shape
    if d < 1:
        raise InvalidParam("need at least one feature")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClass(f"training labels contain a single class: {classes}")

    if selected is None:
        selected = np.arange(d, dtype=np.int64)
    else:
        selected = np.asarray(selected, dtype=np.int64)
        if selected.size != d:
            raise InvalidParam("selected index count must equal feature count")
    in_width = int(in_width if in_width is not None else d)

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    z = (x - mean) / std
    yy = np.where(y == 1, 1.0, -1.0)

    gamma = params.gamma if params.gamma is not None else 1.0 / d
    c = params.c
    tol = params.tol

    gram = _kernel_matrix(params.kernel, gamma, z, z) if n <= _GRAM_LIMIT else None

    def krow(i: int) -> np.ndarray:
        if gram is not None:
            return gram[i]
        return _kernel_matrix(params.kernel, gamma, z[i : i + 1], z)[0]

    alpha = np.zeros(n)
    bias = 0.0
    err = -yy.copy()  # decision values start at zero
    rng = random.Random(params.seed)

    def step(i: int, j: int) -> bool:
        nonlocal bias
        if i == j:
            return False
        ai, aj = alpha[i], alpha[j]
        if yy[i] != yy[j]:
            lo, hi = max(0.0, aj - ai), min(c, c + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - c), min(c, ai + aj)
        if lo == hi:
            return False
        ki = krow(i)
        kj = krow(j)
        eta = 2.0 * ki[j] - ki[i] - kj[j]
        if eta >= 0:
            return False
        aj_new = aj - yy[j] * (err[i] - err[j]) / eta
        aj_new = min(hi, max(lo, aj_new))
        if abs(aj_new - aj) < _MIN_ALPHA_STEP:
            return False
        ai_new = min(c, max(0.0, ai + yy[i] * yy[j] * (aj - aj_new)))
        b1 = bias - err[i] - yy[i] * (ai_new - ai) * ki[i] - yy[j] * (aj_new - aj) * ki[j]
        b2 = bias - err[j] - yy[i] * (ai_new - ai) * ki[j] - yy[j] * (aj_new - aj) * kj[j]
        if 0.0 < ai_new < c:
            b_new = b1
        elif 0.0 < aj_new < c:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        err[:] = err + (
            (ai_new - ai) * yy[i] * ki
            + (aj_new - aj) * yy[j] * kj
            + (b_new - bias)
        )
        alpha[i], alpha[j] = ai_new, aj_new
        bias = b_new
        return True

    def try_pair(i: int) -> bool:
        nonbound = (alpha > 0) & (alpha < c)
        nonbound[i] = False
        cand = np.nonzero(nonbound)[0]
        if cand.size:
            j = int(cand[np.argmax(np.abs(err[i] - err[cand]))])
            if step(i, j):
                return True
            start = rng.randrange(cand.size)
            for j in np.roll(cand, -start):
                if step(i, int(j)):
                    return True
        start = rng.randrange(n)
        for off in range(n):
            j = (start + off) % n
            if j != i and step(i, j):
                return True
        return False

    quiet = 0
    total = 0
    converged = True
    while quiet < params.max_passes:
        if total >= params.max_iter:
            converged = False
            warnings.warn(
                f"SMO hit the {params.max_iter}-pass cap before settling",
                stacklevel=2,
            )
            break
        total += 1
        margin = err * yy  # y_i f(x_i) - 1
        violators = np.nonzero(
            ((margin < -tol) & (alpha < c)) | ((margin > tol) & (alpha > 0))
        )[0]
        changed = 0
        for i in violators:
            margin_i = err[i] * yy[i]
            if (margin_i < -tol and alpha[i] < c) or (margin_i > tol and alpha[i] > 0):
                if try_pair(int(i)):
                    changed += 1
        quiet = quiet + 1 if changed == 0 else 0
        # refresh the error cache each pass to stop float drift
        if gram is not None:
            err[:] = gram @ (alpha * yy) + bias - yy

    sv = alpha > _SV_EPS
    if not np.any(sv):
        raise SingleClass("optimization produced no support vectors")
    return SvmModel(
        kernel=params.kernel,
        c=c,
        gamma=gamma,
        tol=tol,
        max_passes=params.max_passes,
        seed=params.seed,
        support_vectors=z[sv],
        dual_coefs=(alpha * yy)[sv],
        bias=bias,
        scaler_mean=mean,
        scaler_std=std,
        selected=selected,
        in_width=in_width,
        trained_for=trained_for,
        converged=converged,
    )


def svm_predict(model: SvmModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (labels, decision values); label 1 where the decision is >= 0.

    The model applies its own column selection and scaling, so `x` must
    have the column count the model was built against.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch("prediction input must be 2-D")
    if x.shape[1] != model.in_width:
        raise DimensionMismatch(
            f"expected {model.in_width} columns, got {x.shape[1]}"
        )
    if x.shape[0] == 0:
        return np.zeros(0, dtype=np.uint8), np.zeros(0)
    z = (x[:, model.selected] - model.scaler_mean) / model.scaler_std
    kmat = _kernel_matrix(model.kernel, model.gamma, z, model.support_vectors)
    # row-wise reduction (not gemv) so results are invariant to row order
    decision = (kmat * model.dual_coefs).sum(axis=1) + model.bias
    return (decision >= 0).astype(np.uint8), decision


def kkt_violation(model: SvmModel, x: np.ndarray, y: np.ndarray) -> float:
    """Largest KKT residual of the stored solution over a training set.

    0 for samples that satisfy their condition; for alpha = 0 the residual
    is max(0, 1 - y f), for alpha = C it is max(0, y f - 1), and for
    unbounded alpha it is |y f - 1|.
    """
    _, decision = svm_predict(model, x)
    yy = np.where(np.asarray(y) == 1, 1.0, -1.0)
    margin = yy * decision
    # reconstruct alpha magnitude per sample: only support vectors have it
    resid = np.maximum(0.0, 1.0 - margin)  # alpha == 0 condition by default
    z = (x[:, model.selected] - model.scaler_mean) / model.scaler_std
    for row, coef in zip(model.support_vectors, model.dual_coefs):
        match = np.nonzero((z == row).all(axis=1))[0]
        a = abs(coef)
        for i in match:
            if a >= model.c - _SV_EPS:
                resid[i] = max(0.0, margin[i] - 1.0)
            else:
                resid[i] = abs(margin[i] - 1.0)
    return float(resid.max())


# ---------------------------------------------------------------------------
# Persistence: versioned UTF-8 header + hex-encoded little-endian float64
# ---------------------------------------------------------------------------


def _hex_f(v: float) -> str:
    return struct.pack("<d", float(v)).hex()

def _unhex_f(s: str) -> float:
    return struct.unpack("<d", bytes.fromhex(s))[0]

def _hex_arr(a: np.ndarray) -> str:
    return np.ascontiguousarray(a, dtype="<f8").tobytes().hex()

def _unhex_arr(s: str, count: int) -> np.ndarray:
    raw = bytes.fromhex(s)
    if len(raw) != count * 8:
        raise CorruptModel("array payload has the wrong length")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def save_model(model: SvmModel, path) -> None:
    m, d = model.support_vectors.shape
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"kernel {model.kernel}",
        f"C {_hex_f(model.c)}",
        f"gamma {_hex_f(model.gamma)}",
        f"tol {_hex_f(model.tol)}",
        f"max_passes {model.max_passes}",
        f"seed {model.seed}",
        f"in_width {model.in_width}",
        f"trained_for {model.trained_for}",
        f"converged {int(model.converged)}",
        "selected " + " ".join(str(int(i)) for i in model.selected),
        f"scaler_mean {_hex_arr(model.scaler_mean)}",
        f"scaler_std {_hex_arr(model.scaler_std)}",
        f"dual_coefs {_hex_arr(model.dual_coefs)}",
        f"bias {_hex_f(model.bias)}",
        f"sv {m} {d}",
        _hex_arr(model.support_vectors),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> SvmModel:
    path = Path(path)
    if not path.exists():
        raise NotFound(str(path))
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CorruptModel(f"{path}: not a UTF-8 model file") from exc
    if not lines:
        raise CorruptModel(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_MAGIC:
        raise CorruptModel(f"{path}: missing {MODEL_MAGIC} header")
    if head[1] != MODEL_VERSION:
        raise VersionMismatch(
            f"{path}: file version {head[1]}, supported {MODEL_VERSION}"
        )
    try:
        fields = {}
        for line in lines[1:16]:
            key, _, value = line.partition(" ")
            fields[key] = value
        m, d = (int(v) for v in fields["sv"].split())
        sv_payload = lines[16]
        selected = np.array(
            [int(v) for v in fields["selected"].split()], dtype=np.int64
        )
        model = SvmModel(
            kernel=fields["kernel"],
            c=_unhex_f(fields["C"]),
            gamma=_unhex_f(fields["gamma"]),
            tol=_unhex_f(fields["tol"]),
            max_passes=int(fields["max_passes"]),
            seed=int(fields["seed"]),
            support_vectors=_unhex_arr(sv_payload, m * d).reshape(m, d),
            dual_coefs=_unhex_arr(fields["dual_coefs"], m),
            bias=_unhex_f(fields["bias"]),
            scaler_mean=_unhex_arr(fields["scaler_mean"], d),
            scaler_std=_unhex_arr(fields["scaler_std"], d),
            selected=selected,
            in_width=int(fields["in_width"]),
            trained_for=int(fields["trained_for"]),
            converged=bool(int(fields["converged"])),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    if model.kernel not in ("linear", "rbf") or selected.size != d:
        raise CorruptModel(f"{path}: inconsistent model fields")
    return model
