import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from snn_forge.dataio import Dataset
from snn_forge.network import (
    DimensionMismatchError,
    SnnModel,
    decode_particle,
    dimension_count,
    encode_particle,
    feedforward,
    forward_swarm,
    gradients,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    sigmoid,
)


def random_model(rng, n, m, scale=1.0):
    return SnnModel(n, m, rng.normal(0, scale, (m, n)), rng.normal(0, scale, m),
                    rng.normal(0, scale, m), rng.normal(0, scale))


def naive_output(model, x):
    """Two explicit loops over neurons and inputs, sharing nothing with the library path."""
    acc_out = model.output_bias
    for i in range(model.m):
        z = model.hidden_biases[i]
        for j in range(model.n):
            z += model.hidden_weights[i][j] * x[j]
        acc_out += model.output_weights[i] * (1.0 / (1.0 + math.exp(-z)))
    return 1.0 / (1.0 + math.exp(-acc_out))


def half_sse(params, n, m, X, y):
    model = decode_particle(params, n, m)
    return 0.5 * sum((naive_output(model, x) - t) ** 2 for x, t in zip(X, y))


class TestSigmoid:
    def test_symmetry_point(self):
        assert sigmoid(0.0) == 0.5

    @given(st.floats(-700, 700))
    def test_complement(self, z):
        assert sigmoid(z) + sigmoid(-z) == pytest.approx(1.0, abs=1e-15)

    def test_saturates_without_overflow(self):
        with np.errstate(over="raise"):
            assert sigmoid(500.0) > 1 - 1e-6
            assert 0.0 <= sigmoid(-500.0) < 1e-6

    def test_monotone(self):
        z = np.linspace(-30, 30, 2001)
        assert np.all(np.diff(sigmoid(z)) > 0)


class TestDimensionCount:
    @pytest.mark.parametrize("n,m,d", [(8, 4, 41), (1, 1, 4), (9, 4, 45)])
    def test_values(self, n, m, d):
        assert dimension_count(n, m) == d

    @pytest.mark.parametrize("n,m", [(0, 3), (3, 0), (0, 0)])
    def test_rejects_zero(self, n, m):
        with pytest.raises(ValueError):
            dimension_count(n, m)

    def test_matches_field_count(self):
        for n in range(1, 65):
            for m in range(1, 65):
                model = SnnModel.zeros(n, m)
                scalars = (model.hidden_weights.size + model.hidden_biases.size
                           + model.output_weights.size + 1)
                assert scalars == dimension_count(n, m)


class TestParticleCodec:
    def test_zero_model(self):
        assert encode_particle(SnnModel.zeros(1, 1)).tolist() == [0, 0, 0, 0]

    def test_layout_order(self):
        model = SnnModel(2, 2, [[1, 2], [4, 5]], [3, 6], [7, 8], 9)
        assert encode_particle(model).tolist() == [1, 2, 3, 4, 5, 6, 7, 8, 9]

    def test_wbc_sized_vector(self):
        assert encode_particle(SnnModel.zeros(8, 4)).size == 41

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n, m = rng.integers(1, 12, size=2)
            model = random_model(rng, int(n), int(m))
            assert decode_particle(encode_particle(model), int(n), int(m)) == model

    @settings(max_examples=50)
    @given(st.integers(1, 8), st.integers(1, 8), st.data())
    def test_round_trip_property(self, n, m, data):
        v = data.draw(arrays(float, dimension_count(n, m),
                             elements=st.floats(-1e6, 1e6, allow_nan=False)))
        assert np.array_equal(encode_particle(decode_particle(v, n, m)), v)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            decode_particle(np.zeros(40), 8, 4)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            decode_particle([0, 0, np.nan, 0], 1, 1)

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        model = random_model(rng, 9, 4)
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        np.testing.assert_allclose(encode_particle(back), encode_particle(model), rtol=0, atol=1e-12)
        doc = json.loads((tmp_path / "m.json").read_text())
        assert set(doc) == {"n", "m", "params", "layout_version"}
        assert model_from_dict(model_to_dict(model)) == model


class TestFeedforward:
    def test_zero_network(self):
        assert feedforward(SnnModel.zeros(3, 2), [0.3, -2, 7]) == 0.5

    def test_bias_domination(self):
        model = decode_particle(np.r_[np.zeros(12), 10.0], 2, 3)
        rng = np.random.default_rng(0)
        for x in rng.uniform(-5, 5, (20, 2)):
            assert feedforward(model, x) > 0.999

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n, m = (int(v) for v in rng.integers(1, 10, size=2))
            model = random_model(rng, n, m)
            x = rng.normal(size=n)
            assert abs(feedforward(model, x) - naive_output(model, x)) < 1e-12

    def test_batch_and_swarm_paths_agree(self):
        rng = np.random.default_rng(12)
        models = [random_model(rng, 5, 3) for _ in range(4)]
        X = rng.normal(size=(7, 5))
        swarm = forward_swarm(np.stack([encode_particle(mm) for mm in models]), X, 5, 3)
        for p, model in enumerate(models):
            single = [feedforward(model, x) for x in X]
            np.testing.assert_allclose(swarm[p], single, rtol=0, atol=1e-14)
            np.testing.assert_allclose(model.predict(X), single, rtol=0, atol=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            feedforward(SnnModel.zeros(3, 2), [1.0, 2.0])

    @settings(max_examples=100)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_output_in_open_interval(self, n, m, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, n, m, scale=3.0)
        o = feedforward(model, rng.normal(size=n))
        assert 0.0 < o < 1.0


class TestGradients:
    def test_zero_at_perfect_fit(self):
        model = SnnModel.zeros(2, 2)
        batch = Dataset([[0.1, 0.2], [0.3, 0.4]], [0, 0], ["a", "b"])
        # all outputs are 0.5; with targets equal to the outputs the gradient vanishes
        batch = type("B", (), {"features": batch.features, "labels": np.full(2, 0.5)})()
        g = gradients(model, batch)
        assert np.all(encode_particle(g) == 0.0)

    def test_output_bias_single_sample(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 3, 2)
        x = rng.normal(size=3)
        batch = Dataset([x], [1], ["a", "b", "c"])
        o = feedforward(model, x)
        assert gradients(model, batch).output_bias == pytest.approx((o - 1) * o * (1 - o), rel=1e-12)

    def test_empty_batch(self):
        batch = type("B", (), {"features": np.zeros((0, 2)), "labels": np.zeros(0)})()
        with pytest.raises(ValueError):
            gradients(SnnModel.zeros(2, 1), batch)

    @pytest.mark.parametrize("case", range(20))
    def test_finite_difference_oracle(self, case):
        rng = np.random.default_rng(1000 + case)
        n, m = (int(v) for v in rng.integers(1, 7, size=2))
        model = random_model(rng, n, m)
        X = rng.normal(size=(10, n))
        y = (rng.uniform(size=10) < 0.5).astype(float)
        analytic = encode_particle(gradients(model, Dataset(X, y, [f"x{j}" for j in range(n)])))
        params = encode_particle(model)
        h = 1e-5
        numeric = np.empty_like(params)
        for k in range(params.size):
            up, dn = params.copy(), params.copy()
            up[k] += h
            dn[k] -= h
            numeric[k] = (half_sse(up, n, m, X, y) - half_sse(dn, n, m, X, y)) / (2 * h)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        assert rel.max() < 1e-5
