"""Randomized invariant checks shared by test_properties (granular) and the
acceptance suite (full trial counts). Each check returns the number of
randomized trials it ran; failures raise AssertionError immediately."""

import numpy as np

from forestuq import (
    Dataset,
    ErrorDistribution,
    ForestParams,
    bias_at,
    cohab_weights,
    error_distribution,
    fit_forest,
    mspe_at,
    oob_predict,
    prediction_interval,
    qrf_interval,
    terminal_node_of,
    unweighted_oob_interval,
    weighted_quantile,
)
from forestuq.errordist import build_leaf_index
from forestuq.serialize import forest_bytes

TRIALS = {
    "cohab_normalization": 1500,
    "inbag_weight_normalization": 500,
    "cdf_laws": 1500,
    "quantile_monotonicity": 2400,
    "quantile_definition": 800,
    "plugin_recomputation": 800,
    "variance_decomposition": 1000,
    "partition_property": 1500,
    "leaf_mean": 150,
    "interval_order": 200,
    "qrf_range": 150,
    "oob_width_invariance": 60,
    "oracle_equivalence": 50,
    "location_equivariance": 25,
    "determinism": 6,
}


def _random_dist(rng):
    k = int(rng.integers(1, 40))
    e = np.unique(rng.normal(0, rng.uniform(0.5, 5), k))
    w = rng.random(e.size) + 1e-6
    return ErrorDistribution(errors=e, weights=w / w.sum())


def _fit_pool(rng, count=5, n_lo=30, n_hi=80, b_lo=10, b_hi=25):
    pool = []
    for _ in range(count):
        n = int(rng.integers(n_lo, n_hi))
        p = int(rng.integers(2, 5))
        x = rng.uniform(-1, 1, (n, p))
        y = rng.normal(2 * x[:, 0], 1.0)
        data = Dataset(x=x, y=y)
        params = ForestParams(n_trees=int(rng.integers(b_lo, b_hi)),
                              min_node_size=int(rng.integers(1, 5)),
                              seed=int(rng.integers(1 << 31)))
        forest = fit_forest(data, params)
        pool.append((forest, data, oob_predict(forest, data),
                     build_leaf_index(forest, data)))
    return pool


def check_cohab_normalization(rng, trials):
    pool = _fit_pool(rng)
    per = -(-trials // len(pool))
    done = 0
    for forest, data, oob, index in pool:
        for xq in rng.uniform(-1, 1, (per, data.p)):
            cw = cohab_weights(forest, data, xq, index=index)
            assert (cw.weights >= 0).all()
            assert abs(cw.weights.sum() - 1.0) < 1e-12
            assert cw.weights[~index.valid].sum() == 0.0
            done += 1
    return done


def check_inbag_weight_normalization(rng, trials):
    pool = _fit_pool(rng, count=3)
    per = -(-trials // len(pool))
    done = 0
    for forest, data, _, _ in pool:
        for xq in rng.uniform(-1, 1, (per, data.p)):
            b = int(rng.integers(forest.n_trees))
            tree = forest.tree(b)
            leaf = terminal_node_of(tree, xq)
            members = tree.apply(data.x) == leaf
            w = tree.inbag_counts * members
            total = w.sum()
            assert total > 0
            weights = w / total
            assert (weights >= 0).all()
            assert abs(weights.sum() - 1.0) < 1e-12
            done += 1
    return done


def check_cdf_laws(rng, trials):
    for _ in range(trials):
        d = _random_dist(rng)
        cum = np.cumsum(d.weights)
        assert (np.diff(cum) >= -1e-15).all()
        assert d.cdf(d.errors[-1]) == cum[-1]
        assert abs(cum[-1] - 1.0) < 1e-12
        assert d.cdf(d.errors[0] - 1.0) == 0.0
        # right continuity: the jump is attained at the point itself
        k = int(rng.integers(d.errors.size))
        assert d.cdf(d.errors[k]) == cum[k]
        if k:
            assert d.cdf(np.nextafter(d.errors[k], -np.inf)) == cum[k - 1]
    return trials


def check_quantile_monotonicity(rng, trials):
    done = 0
    while done < trials:
        d = _random_dist(rng)
        alphas = np.sort(rng.random(6) * 0.98 + 0.01)
        qs = [weighted_quantile(d, float(a)) for a in alphas]
        assert all(a <= b for a, b in zip(qs, qs[1:]))
        done += len(alphas) // 2
    return done


def check_quantile_definition(rng, trials):
    for _ in range(trials):
        d = _random_dist(rng)
        alpha = float(rng.random() * 0.98 + 0.01)
        q = weighted_quantile(d, alpha)
        assert d.cdf(q) >= alpha
        below = d.cdf(np.nextafter(q, -np.inf))
        assert below < alpha
    return trials


def check_plugin_recomputation(rng, trials):
    for _ in range(trials):
        d = _random_dist(rng)
        m = sum(wi * ei * ei for wi, ei in zip(d.weights, d.errors))
        b = -sum(wi * ei for wi, ei in zip(d.weights, d.errors))
        assert abs(mspe_at(d) - m) <= 1e-12 * max(1.0, abs(m))
        assert abs(bias_at(d) - b) <= 1e-12 * max(1.0, abs(b))
    return trials


def check_variance_decomposition(rng, trials):
    for _ in range(trials):
        d = _random_dist(rng)
        assert mspe_at(d) - bias_at(d) ** 2 >= -1e-12
    return trials


def check_partition_property(rng, trials):
    pool = _fit_pool(rng, count=2, b_lo=4, b_hi=8)
    done = 0
    per_tree = -(-trials // sum(f.n_trees for f, _, _, _ in pool))
    for forest, data, _, _ in pool:
        for b in range(forest.n_trees):
            tree = forest.tree(b)
            boxes = {}

            def walk(node, cons):
                if tree.split_feature[node] < 0:
                    boxes[node] = cons
                    return
                f, t = int(tree.split_feature[node]), float(tree.split_threshold[node])
                walk(int(tree.left_child[node]), cons + [(f, t, True)])
                walk(int(tree.right_child[node]), cons + [(f, t, False)])

            walk(0, [])
            for xq in rng.uniform(-1, 1, (per_tree, data.p)):
                claiming = [
                    leaf for leaf, cons in boxes.items()
                    if all((xq[f] <= t) == left for f, t, left in cons)
                ]
                assert len(claiming) == 1
                assert claiming[0] == terminal_node_of(tree, xq)
                done += 1
    return done


def check_leaf_mean(rng, trials):
    pool = _fit_pool(rng, count=2, b_lo=5, b_hi=9)
    done = 0
    for forest, data, _, _ in pool:
        for b in range(forest.n_trees):
            tree = forest.tree(b)
            leaves = tree.apply(data.x)
            counts = tree.inbag_counts.astype(float)
            for leaf in tree.leaf_ids():
                members = (leaves == leaf) & (counts > 0)
                w = counts[members]
                expect = float(np.dot(w, data.y[members]) / w.sum())
                got = tree.node_value[leaf]
                assert abs(got - expect) <= 1e-12 * max(1.0, abs(expect))
                done += 1
                if done >= trials:
                    return done
    return done


def check_interval_order(rng, trials):
    pool = _fit_pool(rng, count=3)
    per = -(-trials // len(pool))
    done = 0
    for forest, data, oob, index in pool:
        for xq in rng.uniform(-1, 1, (per, data.p)):
            alpha = float(rng.random() * 0.9 + 0.05)
            pi = prediction_interval(forest, data, oob, xq, alpha, index=index)
            assert pi.lower <= pi.upper
            done += 1
    return done


def check_qrf_range(rng, trials):
    pool = _fit_pool(rng, count=2)
    per = -(-trials // len(pool))
    done = 0
    for forest, data, _, index in pool:
        for xq in rng.uniform(-1, 1, (per, data.p)):
            pi = qrf_interval(forest, data, xq, 0.1, index=index)
            assert data.y.min() <= pi.lower <= pi.upper <= data.y.max()
            done += 1
    return done


def check_oob_width_invariance(rng, trials):
    pool = _fit_pool(rng, count=2)
    per = -(-trials // len(pool))
    done = 0
    for forest, data, oob, _ in pool:
        widths = []
        for xq in rng.uniform(-1, 1, (per, data.p)):
            widths.append(unweighted_oob_interval(forest, data, oob, xq, 0.1).width)
            done += 1
        assert max(widths) - min(widths) < 1e-9
    return done


def check_oracle_equivalence(rng, trials):
    done = 0
    while done < trials:
        n = int(rng.integers(8, 21))
        p = int(rng.integers(1, 5))
        x = rng.uniform(-1, 1, (n, p))
        y = rng.normal(0, 1, n)
        data = Dataset(x=x, y=y)
        forest = fit_forest(data, ForestParams(
            n_trees=int(rng.integers(1, 11)), mtry=min(p, 2), min_node_size=1,
            seed=int(rng.integers(1 << 31))))
        for xq in rng.uniform(-1, 1, (5, p)):
            counts = np.zeros(n, dtype=int)
            for b in range(forest.n_trees):
                tree = forest.tree(b)
                xleaf = terminal_node_of(tree, xq)
                for i in range(n):
                    if tree.inbag_counts[i] == 0 and \
                            terminal_node_of(tree, data.x[i]) == xleaf:
                        counts[i] += 1
            cw = cohab_weights(forest, data, xq)
            assert np.array_equal(cw.raw_counts, counts)
            done += 1
    return done


def check_location_equivariance(rng, trials):
    done = 0
    for _ in range(trials):
        n = int(rng.integers(25, 45))
        p = int(rng.integers(2, 4))
        x = rng.uniform(-1, 1, (n, p))
        y = rng.normal(x[:, 0], 0.7)
        shift = float(rng.uniform(-20, 20))
        params = ForestParams(n_trees=10, min_node_size=2,
                              seed=int(rng.integers(1 << 31)))
        d0 = Dataset(x=x, y=y)
        d1 = Dataset(x=x, y=y + shift)
        f0 = fit_forest(d0, params)
        f1 = fit_forest(d1, params)
        # identical structures (split search is response-shift invariant)
        assert np.array_equal(f0.split_feature, f1.split_feature)
        assert np.array_equal(f0.split_threshold, f1.split_threshold, equal_nan=True)
        assert np.array_equal(f0.inbag, f1.inbag)
        oob0, oob1 = oob_predict(f0, d0), oob_predict(f1, d1)
        xq = rng.uniform(-1, 1, p)
        p0 = prediction_interval(f0, d0, oob0, xq, 0.2)
        p1 = prediction_interval(f1, d1, oob1, xq, 0.2)
        assert abs((p1.center - p0.center) - shift) < 1e-9
        assert abs((p1.lower - p0.lower) - shift) < 1e-9
        assert abs((p1.upper - p0.upper) - shift) < 1e-9
        e0 = error_distribution(f0, d0, oob0, xq)
        e1 = error_distribution(f1, d1, oob1, xq)
        assert np.allclose(e0.errors, e1.errors, atol=1e-9)
        done += 1
    return done


def check_determinism(rng, trials):
    done = 0
    for _ in range(trials):
        n = int(rng.integers(20, 40))
        x = rng.uniform(-1, 1, (n, 3))
        data = Dataset(x=x, y=rng.normal(0, 1, n))
        params = ForestParams(n_trees=8, seed=int(rng.integers(1 << 31)))
        assert forest_bytes(fit_forest(data, params)) == \
            forest_bytes(fit_forest(data, params))
        done += 1
    return done


CHECKS = {
    "cohab_normalization": check_cohab_normalization,
    "inbag_weight_normalization": check_inbag_weight_normalization,
    "cdf_laws": check_cdf_laws,
    "quantile_monotonicity": check_quantile_monotonicity,
    "quantile_definition": check_quantile_definition,
    "plugin_recomputation": check_plugin_recomputation,
    "variance_decomposition": check_variance_decomposition,
    "partition_property": check_partition_property,
    "leaf_mean": check_leaf_mean,
    "interval_order": check_interval_order,
    "qrf_range": check_qrf_range,
    "oob_width_invariance": check_oob_width_invariance,
    "oracle_equivalence": check_oracle_equivalence,
    "location_equivariance": check_location_equivariance,
    "determinism": check_determinism,
}


def run_all(seed=0, scale=1.0):
    """Run every randomized check; returns total trials executed."""
    total = 0
    for tag, (name, fn) in enumerate(sorted(CHECKS.items())):
        rng = np.random.default_rng([seed, tag])
        total += fn(rng, max(1, int(TRIALS[name] * scale)))
    return total
