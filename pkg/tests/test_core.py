"""Unit tests for impulse-response types, norms and model responses."""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import unittest

import numpy as np

from hrom.core import (
    DeadTimeSpec,
    MarkovSequence,
    StateSpaceModel,
    StructuredModel,
    finite_gramians,
    frequency_response,
    h2_error,
    h2_norm,
    hankel_weights,
    markov_params,
    relative_error_db,
    simulate,
    spectral_radius,
    weighted_h2_norm,
)
from hrom.errors import (
    DegenerateReferenceError,
    InvalidModelError,
    InvalidSpecError,
    ShapeError,
    SingularityError,
)
from hrom.synth import random_system


def scalar_model(a=0.5, b=1.0, c=1.0, d=2.0):
    return StateSpaceModel([[a]], [[b]], [[c]], [[d]])


def siso(values):
    return MarkovSequence(np.asarray(values, dtype=float).reshape(-1, 1, 1))


class TestTypes(unittest.TestCase):
    """Validation of the domain types."""

    def test_markov_sequence_dims(self):
        h = MarkovSequence(np.zeros((7, 2, 3)))
        self.assertEqual((h.N, h.p, h.m, h.s), (7, 2, 3, 3))

    def test_markov_sequence_is_read_only(self):
        h = siso([1.0, 2.0])
        with self.assertRaises(ValueError):
            h.data[0, 0, 0] = 5.0

    def test_markov_sequence_rejects_bad_shape(self):
        with self.assertRaises(ShapeError):
            MarkovSequence(np.zeros((4, 2)))
        with self.assertRaises(ShapeError):
            MarkovSequence(np.zeros((1, 1, 1)))

    def test_markov_sequence_rejects_nan(self):
        data = np.zeros((4, 1, 1))
        data[2] = np.nan
        with self.assertRaises(ShapeError):
            MarkovSequence(data)

    def test_model_dimension_mismatch(self):
        with self.assertRaises(InvalidModelError):
            StateSpaceModel(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))
        with self.assertRaises(InvalidModelError):
            StateSpaceModel(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.zeros((2, 2)))

    def test_feedthrough_has_no_states(self):
        model = StateSpaceModel.feedthrough(np.eye(2))
        self.assertEqual((model.n, model.p, model.m), (0, 2, 2))

    def test_negative_residual_rejected(self):
        with self.assertRaises(InvalidSpecError):
            DeadTimeSpec([2], [1], [[-1]])

    def test_structured_model_checks_dims(self):
        spec = DeadTimeSpec([0, 0], [0], [[0, 0]])
        with self.assertRaises(InvalidModelError):
            StructuredModel(scalar_model(), spec)

    def test_structured_model_defaults_to_zero_delays(self):
        model = StructuredModel(scalar_model())
        np.testing.assert_array_equal(model.spec.shifts, [[0]])


class TestMarkovParams(unittest.TestCase):
    """Markov parameters of dense and structured models."""

    def test_scalar_system(self):
        h = markov_params(scalar_model(), 4)
        np.testing.assert_allclose(h.data.ravel(), [2.0, 1.0, 0.5, 0.25])

    def test_feedthrough_only(self):
        h = markov_params(StateSpaceModel.feedthrough([[3.0]]), 3)
        np.testing.assert_array_equal(h.data.ravel(), [3.0, 0.0, 0.0])

    def test_structured_shift(self):
        spec = DeadTimeSpec([3], [0], [[0]])
        model = StructuredModel(StateSpaceModel.feedthrough([[1.0]]), spec)
        h = markov_params(model, 6)
        np.testing.assert_array_equal(h.data.ravel(), [0, 0, 0, 1, 0, 0])

    def test_structured_shift_is_channelwise(self):
        core = random_system(3, 2, 2, seed=1)
        spec = DeadTimeSpec([1, 2], [0, 3], np.zeros((2, 2)))
        shifted = markov_params(StructuredModel(core, spec), 20).data
        base = markov_params(core, 20).data
        for i in range(2):
            for j in range(2):
                shift = spec.theta[i] + spec.tau[j]
                np.testing.assert_allclose(shifted[shift:, i, j], base[: 20 - shift, i, j])
                np.testing.assert_array_equal(shifted[:shift, i, j], 0.0)

    def test_single_sample_is_padded(self):
        h = markov_params(scalar_model(), 1)
        self.assertEqual(h.N, 2)
        np.testing.assert_array_equal(h.data.ravel(), [2.0, 0.0])

    def test_invalid_count(self):
        with self.assertRaises(ValueError):
            markov_params(scalar_model(), 0)


class TestNorms(unittest.TestCase):
    """H2 norms and the relative error metric."""

    def test_h2_norm(self):
        self.assertAlmostEqual(h2_norm(siso([3.0, 4.0])), 5.0)

    def test_hankel_weights(self):
        np.testing.assert_array_equal(hankel_weights(2), [1, 1, 2, 1])
        np.testing.assert_array_equal(hankel_weights(3), [1, 1, 2, 3, 2, 1])

    def test_weighted_norm_matches_hankel_identity(self):
        # ||H||_F^2 = 1 + 2*4 + 9 = 18 and h_0^2 = 81
        self.assertAlmostEqual(weighted_h2_norm(siso([9, 1, 2, 3])), np.sqrt(99.0))

    def test_weighted_norm_drops_odd_sample(self):
        self.assertAlmostEqual(weighted_h2_norm(siso([9, 1, 2, 3, 100])), np.sqrt(99.0))

    def test_exact_model_hits_floor(self):
        model = scalar_model()
        h = markov_params(model, 16)
        self.assertEqual(relative_error_db(h, model), -300.0)
        self.assertEqual(h2_error(h, model), 0.0)

    def test_zero_model_is_zero_db(self):
        h = markov_params(scalar_model(), 16)
        zero = StateSpaceModel.feedthrough([[2.0]])
        self.assertAlmostEqual(relative_error_db(h, zero), 0.0, places=10)

    def test_h0_is_excluded(self):
        h = markov_params(scalar_model(), 16)
        other_d = scalar_model(d=-7.0)
        self.assertEqual(relative_error_db(h, other_d), -300.0)

    def test_degenerate_reference(self):
        h = siso([1.0, 0.0, 0.0, 0.0])
        with self.assertRaises(DegenerateReferenceError):
            relative_error_db(h, scalar_model())

    def test_shape_mismatch(self):
        h = MarkovSequence(np.ones((4, 2, 1)))
        with self.assertRaises(ShapeError):
            relative_error_db(h, scalar_model())

    def test_odd_trailing_sample_is_not_scored(self):
        h = markov_params(scalar_model(), 9)
        tail = MarkovSequence(np.concatenate([h.data[:8], [[[100.0]]]]))
        self.assertEqual(relative_error_db(tail, scalar_model()), -300.0)
        self.assertEqual(h2_error(tail, scalar_model()), 0.0)

    def test_structured_window_follows_dead_time(self):
        spec = DeadTimeSpec([2], [1], [[0]])
        model = StructuredModel(scalar_model(), spec)
        h = markov_params(model, 12)
        # data before the onset and past the rectified window are not scored
        data = h.data.copy()
        data[1] = 50.0
        data[11] = 50.0
        self.assertEqual(relative_error_db(MarkovSequence(data), model), -300.0)
        data[4] += 1.0
        self.assertGreater(relative_error_db(MarkovSequence(data), model), -300.0)

    def test_dead_time_longer_than_record(self):
        model = StructuredModel(scalar_model(), DeadTimeSpec([6], [5], [[0]]))
        with self.assertRaises(ShapeError):
            relative_error_db(siso(np.ones(12)), model)


class TestResponses(unittest.TestCase):
    """Frequency response, simulation and Gramians."""

    def test_frequency_response_dc(self):
        # G(1) = 2 + 1 / (1 - 0.5)
        G = frequency_response(scalar_model(), [0.0])
        self.assertAlmostEqual(G[0, 0, 0].real, 4.0)
        self.assertAlmostEqual(G[0, 0, 0].imag, 0.0)

    def test_frequency_response_matches_dtft(self):
        model = random_system(4, 2, 3, seed=3, radius=0.5)
        h = markov_params(model, 200).data
        omegas = np.array([0.3, 1.1, 2.9])
        G = frequency_response(model, omegas)
        k = np.arange(200)
        for idx, omega in enumerate(omegas):
            expected = np.tensordot(np.exp(-1j * omega * k), h, axes=(0, 0))
            np.testing.assert_allclose(G[idx], expected, atol=1e-10)

    def test_pure_delay_is_allpass(self):
        spec = DeadTimeSpec([2], [5], [[0]])
        model = StructuredModel(StateSpaceModel.feedthrough([[1.0]]), spec)
        G = frequency_response(model, np.linspace(0, np.pi, 17))
        np.testing.assert_allclose(np.abs(G), 1.0)

    def test_singular_frequency(self):
        with self.assertRaises(SingularityError) as ctx:
            frequency_response(scalar_model(a=1.0), [0.0])
        self.assertEqual(ctx.exception.omega, 0.0)
        self.assertEqual(ctx.exception.to_dict()["kind"], "singularity")

    def test_simulate_impulse_matches_markov(self):
        model = random_system(3, 2, 2, seed=4)
        h = markov_params(model, 12).data
        u = np.zeros((12, 2))
        u[0, 1] = 1.0
        y = simulate(model, u)
        np.testing.assert_allclose(y, h[:, :, 1], atol=1e-12)

    def test_simulate_structured(self):
        core = random_system(2, 1, 2, seed=5)
        spec = DeadTimeSpec([2], [0, 1], np.zeros((2, 1)))
        model = StructuredModel(core, spec)
        u = np.zeros((10, 1))
        u[0, 0] = 1.0
        y = simulate(model, u)
        np.testing.assert_allclose(y, markov_params(model, 10).data[:, :, 0], atol=1e-12)

    def test_simulate_feedthrough(self):
        y = simulate(StateSpaceModel.feedthrough([[2.0]]), np.arange(4.0))
        np.testing.assert_array_equal(y.ravel(), [0.0, 2.0, 4.0, 6.0])

    def test_spectral_radius(self):
        self.assertAlmostEqual(spectral_radius(scalar_model(a=-0.7)), 0.7)
        self.assertEqual(spectral_radius(StateSpaceModel.feedthrough([[1.0]])), 0.0)

    def test_finite_gramians(self):
        P, Q = finite_gramians(scalar_model(), 3)
        self.assertAlmostEqual(P[0, 0], 1 + 0.25 + 0.0625)
        self.assertAlmostEqual(Q[0, 0], 1 + 0.25 + 0.0625)


if __name__ == "__main__":
    unittest.main()
