import itertools

import numpy as np
import pytest

from mbgen import oracles
from mbgen.chem import MolecularGraph
from mbgen.diffusion import (
    DiffusionError,
    NoiseSchedule,
    TransitionMatrices,
    build_transitions,
    estimate_marginals,
    forward_noise,
    posterior,
    posterior_table,
    reverse_distribution,
    reverse_step,
    sample_prior,
    training_loss,
)
from mbgen.nn import Tensor, make_rng

M5 = np.array([0.72, 0.2, 0.03, 0.01, 0.04])


@pytest.fixture(scope="module")
def trans():
    return build_transitions(NoiseSchedule.cosine(50), M5)


def test_schedule_shape():
    s = NoiseSchedule.cosine(50)
    assert s.alpha_bar[0] == 1.0
    assert np.all(np.diff(s.alpha_bar) <= 0)
    assert s.alpha_bar[-1] <= 1e-4


def test_identity_when_no_noise():
    sched = NoiseSchedule(3, np.ones(4))
    tr = build_transitions(sched, M5)
    assert np.array_equal(tr.Q[2], np.eye(5))


def test_full_noise_rows_equal_marginal():
    sched = NoiseSchedule(2, np.array([1.0, 0.5, 0.0]))
    tr = build_transitions(sched, M5)
    assert np.allclose(tr.Qbar[2], np.broadcast_to(M5, (5, 5)), atol=1e-15)


def test_closed_form_matches_product_random_schedule():
    rng = make_rng(0)
    ab = np.concatenate([[1.0], np.sort(rng.random(20))[::-1]])
    tr = build_transitions(NoiseSchedule(20, ab), M5)
    for t in range(21):
        assert np.abs(oracles.qbar_product(tr.Q, t) - tr.Qbar[t]).max() <= 1e-10


def test_marginals_floor_and_normalise():
    g = MolecularGraph(("C", "C", "C"), np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
    m = estimate_marginals([g])
    assert abs(m.sum() - 1) < 1e-15
    assert np.all(m >= 1e-3 / 1.01)
    assert m[0] == pytest.approx(1 / 3, abs=3e-3) and m[1] == pytest.approx(2 / 3, abs=3e-3)


def test_forward_noise_identity_at_zero_noise():
    sched = NoiseSchedule(2, np.array([1.0, 1.0, 0.5]))
    tr = build_transitions(sched, M5)
    E0 = np.array([[0, 1, 4], [1, 0, 2], [4, 2, 0]])
    assert np.array_equal(forward_noise(E0, 1, tr, make_rng(0)), E0)


def test_forward_noise_symmetric(trans):
    rng = make_rng(1)
    E0 = np.triu(rng.integers(0, 5, size=(4, 7, 7)), 1)
    E0 = E0 + np.swapaxes(E0, 1, 2)
    Et = forward_noise(E0, np.array([3, 10, 30, 50]), trans, rng)
    assert np.array_equal(Et, np.swapaxes(Et, 1, 2))
    assert np.all(np.diagonal(Et, axis1=1, axis2=2) == 0)


def test_forward_noise_converges_to_marginal(trans):
    rng = make_rng(2)
    E0 = np.full((100_000, 2, 2), 2, dtype=np.int8)
    E0[:, 0, 0] = E0[:, 1, 1] = 0
    Et = forward_noise(E0, trans.T, trans, rng)
    freq = np.bincount(Et[:, 0, 1], minlength=5) / len(Et)
    assert np.max(np.abs(freq - M5)) <= 0.01


def test_posterior_boundaries(trans):
    for e_t, e_0 in itertools.product(range(5), repeat=2):
        assert np.array_equal(posterior(e_t, e_0, 1, trans), np.eye(5)[e_0])
    sched = NoiseSchedule(3, np.array([1.0, 0.6, 0.6, 0.3]))
    tr = build_transitions(sched, M5)
    # alpha_2 = 1: the step is deterministic
    for e in range(5):
        assert np.allclose(posterior(e, (e + 1) % 5, 2, tr), np.eye(5)[e], atol=1e-15)


def test_posterior_matches_bayes_everywhere(trans):
    for t in range(1, 51):
        table = posterior_table(t, trans)
        for e_t, e_0 in itertools.product(range(5), repeat=2):
            assert np.abs(table[e_t, e_0] - oracles.bayes_posterior(e_t, e_0, t, trans.Q)).max() <= 1e-12


def test_posterior_monte_carlo(trans):
    """Simulate (e_0 -> e_{t-1} -> e_t) pairs and compare the empirical conditional."""
    rng = make_rng(3)
    t, e0 = 20, 1
    N = 200_000
    prev = rng.choice(5, size=N, p=trans.Qbar[t - 1][e0])
    cur = np.array([rng.choice(5, p=trans.Q[t][a]) for a in prev[:20000]])
    prev = prev[:20000]
    for e_t in (0, 1):
        sel = prev[cur == e_t]
        emp = np.bincount(sel, minlength=5) / len(sel)
        assert np.abs(emp - posterior(e_t, e0, t, trans)).max() < 0.02


def test_posterior_zero_normaliser_raises():
    Q = np.stack([np.eye(2), np.eye(2)])
    tr = TransitionMatrices(Q, Q, np.array([1.0, 0.0]))
    with pytest.raises(DiffusionError):
        posterior(1, 0, 1, tr)


def test_loss_examples():
    rng = make_rng(4)
    E0 = np.triu(rng.integers(0, 5, size=(2, 5, 5)), 1)
    E0 = E0 + np.swapaxes(E0, 1, 2)
    mask = np.broadcast_to(np.triu(np.ones((5, 5), dtype=bool), 1), (2, 5, 5))
    sat = Tensor(np.eye(5)[E0] * 50.0)
    assert training_loss(sat, E0, mask).item() < 1e-3
    assert training_loss(Tensor(np.zeros((2, 5, 5, 5))), E0, mask).item() == pytest.approx(np.log(5), abs=1e-12)
    logits = rng.normal(size=(2, 5, 5, 5))
    got = training_loss(Tensor(logits), E0, mask).item()
    total, count = 0.0, 0
    for b in range(2):
        for i in range(5):
            for j in range(i + 1, 5):
                z = logits[b, i, j]
                total += -(z[E0[b, i, j]] - np.log(np.exp(z).sum()))
                count += 1
    assert abs(got - total / count) <= 1e-12


def test_reverse_mixture_collapses_on_one_hot(trans):
    E_t = np.array([[0, 3], [3, 0]])
    probs = np.zeros((2, 2, 5))
    probs[..., 1] = 1.0
    dist = reverse_distribution(probs, E_t, 17, trans)
    assert np.array_equal(dist[0, 1], posterior(3, 1, 17, trans))


def test_reverse_mixture_matches_enumeration(trans):
    rng = make_rng(5)
    probs = rng.dirichlet(np.ones(5), size=(3, 3))
    E_t = np.array([[0, 2, 4], [2, 0, 0], [4, 0, 0]])
    for t in (1, 7, 50):
        dist = reverse_distribution(probs, E_t, t, trans)
        for i, j in itertools.product(range(3), repeat=2):
            assert np.abs(dist[i, j] - oracles.mixture_loop(probs[i, j], E_t[i, j], t, trans.Q)).max() <= 1e-12


def test_reverse_step_at_t1_follows_prediction(trans):
    logits = np.full((1, 4, 4, 5), -40.0)
    logits[..., 2] = 40.0
    E = reverse_step(logits, np.zeros((1, 4, 4), dtype=np.int8), 1, trans, make_rng(6))
    off = ~np.eye(4, dtype=bool)
    assert np.all(E[0][off] == 2) and np.all(np.diag(E[0]) == 0)


def test_reverse_step_symmetric(trans):
    rng = make_rng(7)
    logits = rng.normal(size=(3, 6, 6, 5))
    E = sample_prior(6, trans, rng, lead=(3,))
    for t in range(50, 0, -1):
        E = reverse_step(logits, E, t, trans, rng)
        assert np.array_equal(E, np.swapaxes(E, 1, 2))
        assert np.all(np.diagonal(E, axis1=1, axis2=2) == 0)


def test_reverse_step_rejects_impossible_mass():
    Q = np.stack([np.eye(2), np.eye(2)])
    tr = TransitionMatrices(Q, Q, np.array([0.5, 0.5]))
    with pytest.raises(DiffusionError):
        reverse_distribution(np.array([[0.5, 0.5]]), np.array([0]), 1, tr)


def test_small_chain_matches_enumeration():
    """k=2, n=3, T=4, a fixed random decoder: chain samples vs the exact law of E_0."""
    from mbgen.decoder import DecoderConfig, ManyBodyDecoder, decode_logits
    from mbgen.sampling import sample_bond_matrices

    cfg = DecoderConfig(d_h=4, d_e=4, d_y=3, d_c=4, d_t=4, heads_node_edge=2, heads_many_body=2, layers=1, ffn_hidden=4, k=2, fp_length=8)
    rng = make_rng(8)
    dec = ManyBodyDecoder(rng, cfg)
    for _, p in dec.named_parameters():
        p.data *= 3.0
    y = rng.normal(size=3)
    m = np.array([0.6, 0.4])
    tr = build_transitions(NoiseSchedule.cosine(4), m)
    nodes = ("C", "C", "N")
    exact = oracles.chain_marginal(3, lambda E, t: decode_logits(nodes, E, t, y, dec, tr.T), tr.Q, m)
    E = sample_bond_matrices(nodes, y, dec, tr, make_rng(9), 20_000)
    keys = E[:, [0, 0, 1], [1, 2, 2]]
    emp = {s: 0 for s in exact}
    for row in map(tuple, keys):
        emp[row] += 1
    tv = 0.5 * sum(abs(emp[s] / len(E) - p) for s, p in exact.items())
    assert tv <= 0.02
