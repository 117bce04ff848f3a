"""Finite-difference verification of every layer and of a tiny end-to-end network.

Each check builds a small random problem from ``seeding.stream(seed, ...)``,
reduces the layer output to a scalar with a fixed random projection, and
compares the analytic gradients of every input and parameter with central
differences.  The functions under test are looked up through their modules
at call time, so a patched implementation is what gets checked.
"""
from dataclasses import dataclass

import numpy as np

from . import seeding
from .neuralcore import layers, lstm, numgrad

TOLERANCE = 1e-4
STEP = 1e-5
N_SEEDS = 10
LAYERS = ("conv2d", "prelu", "maxpool", "dense", "lstm_cell", "bilstm", "head", "end_to_end")

# Tiny end-to-end network: 8x8 grid, three pooling stages, 4 LSTM units.
TINY_STACK = (3, 3, "pool", 4, 4, "pool", 5, 5, "pool")
TINY_GRID = 8
TINY_FC = 6
TINY_UNITS = 4
TINY_BATCH = 2


@dataclass(frozen=True)
class CheckResult:
    layer: str
    worst_error: float
    n_seeds: int
    n_skipped: int = 0  # coordinates whose stencil crossed a kink

    @property
    def passed(self):
        return self.worst_error <= TOLERANCE


def _compare(loss_fn, tree, analytic):
    numeric = numgrad.finite_diff_grad(loss_fn, tree, h=STEP)
    return max(numgrad.max_rel_error(analytic[k], numeric[k]) for k in tree)


def _away_from_zero(rng, shape, margin=0.05):
    """Normal draws with no entry within ``margin`` of the PReLU kink."""
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def check_conv2d(seed):
    rng = seeding.stream(seed, "gradcheck", 0)
    tree = {"x": rng.standard_normal((2, 3, 5, 4)), "k": rng.standard_normal((4, 3, 3, 3)),
            "b": rng.standard_normal(4)}
    proj = rng.standard_normal((2, 4, 5, 4))

    def loss(t):
        return float(np.sum(proj * layers.conv2d_forward(t["x"], t["k"], t["b"])))

    dx, dk, db = layers.conv2d_backward(proj, tree["x"], tree["k"])
    return _compare(loss, tree, {"x": dx, "k": dk, "b": db})


def check_prelu(seed):
    rng = seeding.stream(seed, "gradcheck", 1)
    tree = {"x": _away_from_zero(rng, (3, 4, 5)), "a": rng.uniform(0.05, 0.5, 3)}
    proj = rng.standard_normal((3, 4, 5))

    def loss(t):
        return float(np.sum(proj * layers.prelu_forward(t["x"], t["a"])))

    dx, da = layers.prelu_backward(proj, tree["x"], tree["a"])
    return _compare(loss, tree, {"x": dx, "a": da})


def check_maxpool(seed):
    rng = seeding.stream(seed, "gradcheck", 2)
    # Well-separated values so a step of STEP never changes a block's winner.
    x = rng.permutation(2 * 3 * 4 * 4).reshape(2, 3, 4, 4) * 0.01
    tree = {"x": x.astype(np.float64)}
    proj = rng.standard_normal((2, 3, 2, 2))

    def loss(t):
        return float(np.sum(proj * layers.maxpool2x2_forward(t["x"])[0]))

    _, arg = layers.maxpool2x2_forward(tree["x"])
    return _compare(loss, tree, {"x": layers.maxpool2x2_backward(proj, arg)})


def check_dense(seed):
    rng = seeding.stream(seed, "gradcheck", 3)
    tree = {"x": rng.standard_normal((3, 5)), "W": rng.standard_normal((4, 5)), "b": rng.standard_normal(4)}
    proj = rng.standard_normal((3, 4))

    def loss(t):
        return float(np.sum(proj * layers.dense_forward(t["x"], t["W"], t["b"])))

    dx, dW, db = layers.dense_backward(proj, tree["x"], tree["W"])
    return _compare(loss, tree, {"x": dx, "W": dW, "b": db})


def _lstm_params(rng, d, u, scale=0.3):
    return {"W": scale * rng.standard_normal((4 * u, d)), "U": scale * rng.standard_normal((4 * u, u)),
            "b": scale * rng.standard_normal(4 * u)}


def check_lstm_cell(seed):
    rng = seeding.stream(seed, "gradcheck", 4)
    d, u, b = 5, 3, 2
    p = _lstm_params(rng, d, u)
    tree = {"x": rng.standard_normal((b, d)), "h": 0.5 * rng.standard_normal((b, u)),
            "c": 0.5 * rng.standard_normal((b, u)), **p}
    ph, pc = rng.standard_normal((b, u)), rng.standard_normal((b, u))

    def loss(t):
        h, c = lstm.lstm_cell_step(t["x"], t["h"], t["c"], {k: t[k] for k in "WUb"})
        return float(np.sum(ph * h) + np.sum(pc * c))

    _, _, cache = lstm.lstm_cell_forward(tree["x"], tree["h"], tree["c"], p)
    dx, dh, dc, g = lstm.lstm_cell_backward(ph, pc, cache, p)
    return _compare(loss, tree, {"x": dx, "h": dh, "c": dc, **g})


def check_bilstm(seed):
    rng = seeding.stream(seed, "gradcheck", 5)
    d, u, b, t_len = 4, 3, 2, 5
    pf, pb = _lstm_params(rng, d, u), _lstm_params(rng, d, u)
    tree = {"x": rng.standard_normal((b, t_len, d)), **{f"f{k}": v for k, v in pf.items()},
            **{f"b{k}": v for k, v in pb.items()}}
    proj = rng.standard_normal((b, t_len, 2 * u))

    def split(t):
        return {k: t[f"f{k}"] for k in "WUb"}, {k: t[f"b{k}"] for k in "WUb"}

    def loss(t):
        f, bw = split(t)
        return float(np.sum(proj * lstm.bilstm_forward(t["x"], f, bw)))

    _, cache = lstm.bilstm_forward(tree["x"], pf, pb, return_cache=True)
    dx, gf, gb = lstm.bilstm_backward(proj, cache, pf, pb)
    return _compare(loss, tree, {"x": dx, **{f"f{k}": v for k, v in gf.items()},
                                 **{f"b{k}": v for k, v in gb.items()}})


def check_head(seed):
    """BiLSTM output flattened into the dense head, with an MSE loss."""
    from .model import WINDOW

    rng = seeding.stream(seed, "gradcheck", 6)
    u, b = 3, 4
    tree = {"h": rng.standard_normal((b, WINDOW * 2 * u)), "W": rng.standard_normal((1, WINDOW * 2 * u)),
            "b": rng.standard_normal(1)}
    target = rng.standard_normal(b)

    def loss(t):
        pred = layers.dense_forward(t["h"], t["W"], t["b"])[:, 0]
        return layers.mse_loss(pred, target)[0]

    pred = layers.dense_forward(tree["h"], tree["W"], tree["b"])[:, 0]
    _, dpred = layers.mse_loss(pred, target)
    dh, dW, db = layers.dense_backward(dpred[:, None], tree["h"], tree["W"])
    return _compare(loss, tree, {"h": dh, "W": dW, "b": db})


def tiny_config():
    from .model import PVNetConfig

    return PVNetConfig(conv_stack=TINY_STACK, fc_dim=TINY_FC, lstm_units=TINY_UNITS,
                       dropout_conv=0.0, dropout_fc=0.0)


def _kink_pattern(cache):
    """Which side of every kink (PReLU sign, pool winner, hard-sigmoid clip) each unit is on."""
    (caches, _, _), (_, (cache_f, cache_b, _), _, _), _, _ = cache
    parts = []
    for cc in caches:
        parts.append(cc[1] if cc[0] == "pool" else cc[3] > 0)
    for _, zs, _, _ in (cache_f, cache_b):
        u = zs.shape[-1] // 4
        gates = zs[..., :3 * u]
        parts.append(np.sign(np.clip(gates, -2.5, 2.5) - gates))
    return b"".join(np.ascontiguousarray(p).tobytes() for p in parts)


def check_end_to_end(seed, return_skipped=False):
    """MSE of the tiny network on a batch of overlapping windows, every parameter.

    Coordinates where ``x +- h`` lands on the other side of a kink are not
    differentiable on the stencil and are skipped.
    """
    from .model import WINDOW, forward_batch, init_params, loss_and_grads

    mcfg = tiny_config()
    rng = seeding.stream(seed, "gradcheck", 7)
    n_ch = 5
    params = init_params(mcfg, (TINY_GRID, TINY_GRID), n_ch, seed=seed)
    # Perturb away from the symmetric init so every path carries gradient.
    for k, v in params.items():
        params[k] = v + 0.05 * rng.standard_normal(v.shape)
    n_frames = WINDOW + TINY_BATCH - 1
    frames = rng.standard_normal((n_ch, n_frames, TINY_GRID, TINY_GRID))
    index = np.arange(WINDOW)[None, :] + np.arange(TINY_BATCH)[:, None]
    targets = rng.standard_normal(TINY_BATCH)

    def evaluate():
        pred, cache = forward_batch(frames, index, params, mcfg)
        return layers.mse_loss(pred, targets)[0], _kink_pattern(cache)

    _, grads = loss_and_grads(frames, index, targets, params, mcfg)
    _, base = evaluate()
    worst, skipped = 0.0, 0
    for name, p in params.items():
        flat = p.reshape(-1)
        numeric = np.full(flat.size, np.nan)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + STEP
            lp, pp = evaluate()
            flat[k] = orig - STEP
            lm, pm = evaluate()
            flat[k] = orig
            if pp != base or pm != base:
                skipped += 1
                continue
            numeric[k] = (lp - lm) / (2.0 * STEP)
        worst = max(worst, numgrad.max_rel_error(grads[name], numeric))
    return (worst, skipped) if return_skipped else worst


CHECKS = {
    "conv2d": check_conv2d,
    "prelu": check_prelu,
    "maxpool": check_maxpool,
    "dense": check_dense,
    "lstm_cell": check_lstm_cell,
    "bilstm": check_bilstm,
    "head": check_head,
    "end_to_end": check_end_to_end,
}


def run_all(seed=0, n_seeds=N_SEEDS, layers_=LAYERS):
    """Worst relative error per layer over seeds ``seed .. seed + n_seeds - 1``."""
    results = []
    for name in layers_:
        worst, skipped = 0.0, 0
        for s in range(seed, seed + n_seeds):
            if name == "end_to_end":
                err, n = check_end_to_end(s, return_skipped=True)
                skipped += n
            else:
                err = CHECKS[name](s)
            worst = max(worst, err)
        results.append(CheckResult(layer=name, worst_error=worst, n_seeds=n_seeds, n_skipped=skipped))
    return results


def format_results(results):
    lines = []
    for r in results:
        note = f"  ({r.n_skipped} kink coordinates skipped)" if r.n_skipped else ""
        lines.append(f"{r.layer:<12} worst rel error {r.worst_error:.3e}  {'PASS' if r.passed else 'FAIL'}{note}")
    failed = [r.layer for r in results if not r.passed]
    lines.append("all checks passed" if not failed else "FAILED: " + ", ".join(failed))
    return "\n".join(lines) + "\n"
