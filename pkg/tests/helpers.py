"""Shared oracles for the test suite: finite-difference gradient checking
and brute-force curve distances. These stay independent of the library code
paths they verify."""

from itertools import product

import numpy as np

from secs.datamodel import CellId
from secs.features import FeatureSeries, FeatureSpec, batch_sequence
from secs.network import backward, forward, init_model


def random_tiny_setup(seed, dropout_rate=None):
    """A small random nested model plus one input sample and output weights."""
    rng = np.random.default_rng(seed)
    lags = tuple(range(1, int(rng.integers(1, 4))))
    spec = FeatureSpec(
        lags=lags or (1,),
        include_doy=bool(rng.integers(0, 2)),
        batch_len=int(rng.integers(2, 5)),
    )
    hidden = int(rng.integers(2, 6))
    if dropout_rate is None:
        dropout_rate = float(rng.choice([0.0, 0.3]))
    model = init_model(
        spec, hidden, seed=seed + 1, dropout_rate=dropout_rate, dtype=np.float64
    )
    # Head biases start at zero; when dropout blanks a whole hidden vector the
    # ReLU pre-activation would sit exactly on its kink, where central
    # differences disagree with the defined subgradient. Nudge them off it.
    model.head_b[...] = rng.normal(0.0, 0.5, size=model.head_b.shape)
    n_days = int(rng.integers(spec.batch_len + 1, 4 * spec.batch_len))
    matrix = rng.standard_normal((n_days, spec.n_features))
    fs = FeatureSeries(cell=CellId("t", 0, 0), year=2000, matrix=matrix)
    seq = batch_sequence(fs, spec)
    weights = rng.standard_normal(n_days)
    return model, seq, weights


def fd_gradcheck(model, seq, out_weights, eps=1e-4, rng_seed=1234):
    """Worst relative disagreement between analytic gradients and central
    finite differences of the scalar loss sum(out_weights * forward(...)).

    Train-mode forwards reuse the same dropout stream per evaluation, so the
    perturbed losses stay on one smooth branch. Entries where both sides are
    below 1e-6 are compared absolutely at 1e-8.
    """

    def loss_and_cache():
        pred, cache = forward(
            model, seq, mode="train", rng=np.random.default_rng(rng_seed)
        )
        return float(out_weights @ pred), cache

    _, cache = loss_and_cache()
    grads = backward(model, cache, out_weights.astype(np.float64))

    worst = 0.0
    for name, p in model.param_dict().items():
        flat = p.reshape(-1)
        gflat = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up, _ = loss_and_cache()
            flat[k] = orig - eps
            down, _ = loss_and_cache()
            flat[k] = orig
            fd = (up - down) / (2.0 * eps)
            a = gflat[k]
            scale = max(abs(a), abs(fd))
            if scale > 1e-6:
                err = abs(a - fd) / scale
            else:
                err = 0.0 if abs(a - fd) <= 1e-8 else 1.0
            worst = max(worst, err)
    return worst


def brute_force_frechet(p, q):
    """Minimum over every monotone coupling of the worst paired distance,
    by explicit path enumeration (no memoization)."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    m, n = len(p), len(q)
    dist = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
    best = [np.inf]

    def walk(i, j, acc):
        acc = max(acc, dist[i, j])
        if acc >= best[0]:
            return
        if i == m - 1 and j == n - 1:
            best[0] = acc
            return
        if i + 1 < m:
            walk(i + 1, j, acc)
        if j + 1 < n:
            walk(i, j + 1, acc)
        if i + 1 < m and j + 1 < n:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


def brute_force_hausdorff(p, q):
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    d_pq = max(min(np.linalg.norm(a - b) for b in q) for a in p)
    d_qp = max(min(np.linalg.norm(b - a) for a in p) for b in q)
    return max(d_pq, d_qp)
