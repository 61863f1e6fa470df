"""End-to-end acceptance suite.

Each test class checks one contract of the package: exactness of the
barycentric realizability map, algebraic round trips, solver physics
(plane strain, laminar limit, momentum balance), reference-stress
propagation, envelope behaviour of the data-driven mode, forest
training quality, realizability of every perturbed stress field, and
the full-anisotropy correction round trip.
"""

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from eigenuq import channel, dns, perturb, pipeline, rotation, tensors
from eigenuq.channel import ChannelConfig
from eigenuq.perturb import PerturbationSpec
from eigenuq.tensors import BarycentricPoint, ReynoldsStress


def random_realizable(rng, scale=1.0):
    a = rng.normal(size=(3, 3))
    return ReynoldsStress.from_matrix(scale * (a @ a.T))


class TestCornerExactness:
    """The three limiting states map onto the triangle corners exactly."""

    CORNERS = ("1C", "2C", "3C")

    @pytest.mark.parametrize("corner", CORNERS)
    def test_eigenvalue_map_round_trip(self, corner):
        target = tensors.corner_coords(corner)
        lam = tensors.from_barycentric(BarycentricPoint(x=target[0], y=target[1]))
        back = tensors.eigenvalues_to_point(lam)
        assert np.max(np.abs(back.coords() - target)) <= 1e-12

    @pytest.mark.parametrize("corner", CORNERS)
    def test_tensor_level_round_trip(self, corner):
        target = tensors.corner_coords(corner)
        lam = tensors.from_barycentric(BarycentricPoint(x=target[0], y=target[1]))
        tau = tensors.reconstruct(
            tensors.AnisotropyEigenSystem(k=1.0, lam=lam, frame=np.eye(3))
        )
        pt = tensors.to_barycentric(tensors.decompose(tau))
        assert np.max(np.abs(pt.coords() - target)) <= 1e-12

    @pytest.mark.parametrize("corner", CORNERS)
    def test_unit_delta_b_lands_on_corner(self, corner, rng):
        target = tensors.corner_coords(corner)
        for _ in range(100):
            w = rng.dirichlet(np.ones(3))
            xy = (
                w[0] * tensors.CORNER_1C
                + w[1] * tensors.CORNER_2C
                + w[2] * tensors.CORNER_3C
            )
            out = perturb.perturb_point_corner(
                BarycentricPoint(x=xy[0], y=xy[1]), corner, 1.0
            )
            assert np.max(np.abs(out.coords() - target)) <= 1e-12

    @pytest.mark.parametrize("corner", CORNERS)
    def test_unit_delta_b_on_stress_tensor(self, corner, rng):
        target = tensors.corner_coords(corner)
        for _ in range(20):
            eig = tensors.decompose(random_realizable(rng))
            out = perturb.build_perturbed_stress(
                eig, PerturbationSpec.data_free_corner(corner, 1.0)
            )
            pt = tensors.to_barycentric(tensors.decompose(out))
            assert np.max(np.abs(pt.coords() - target)) <= 1e-9


class TestRoundTrips:
    """Algebraic round trips stay below 1e-9 over >= 1000 random cases."""

    N = 1000

    def test_decompose_reconstruct(self, rng):
        for _ in range(self.N):
            tau = random_realizable(rng, scale=float(rng.uniform(1e-4, 1e3)))
            back = tensors.reconstruct(tensors.decompose(tau))
            err = np.max(np.abs(back.matrix() - tau.matrix()))
            assert err <= 1e-9 * max(1.0, 2.0 * tau.k)

    def test_triangle_point_maps(self, rng):
        for _ in range(self.N):
            w = rng.dirichlet(np.ones(3))
            xy = (
                w[0] * tensors.CORNER_1C
                + w[1] * tensors.CORNER_2C
                + w[2] * tensors.CORNER_3C
            )
            pt = BarycentricPoint(x=xy[0], y=xy[1])
            back = tensors.eigenvalues_to_point(tensors.from_barycentric(pt))
            assert np.max(np.abs(back.coords() - pt.coords())) <= 1e-9
            assert np.max(np.abs(back.weights - w)) <= 1e-9

    def test_frame_rotation_extraction(self, rng):
        for _ in range(self.N):
            a = special_ortho_group.rvs(3, random_state=rng)
            b = special_ortho_group.rvs(3, random_state=rng)
            ang = rotation.extract_angles(a, b)
            assert np.max(np.abs(rotation.apply_rotation(a, ang) - b)) <= 1e-9


class TestPlaneStrainBaseline:
    """The baseline eddy-viscosity stress has a zero middle anisotropy
    eigenvalue at every turbulent node."""

    @pytest.mark.parametrize("label", ["baseline_180", "baseline_1000"])
    def test_middle_eigenvalue_vanishes(self, label, request):
        state = request.getfixturevalue(label)
        checked = 0
        for tau in state.tau:
            eig = tensors.decompose(tau)
            if eig.degenerate:
                continue
            assert abs(eig.lam[1]) < 1e-10
            checked += 1
        assert checked > 100


class TestLaminarLimit:
    def test_analytic_parabola(self):
        cfg = ChannelConfig(re_tau=180.0, n_cells=384, laminar=True)
        state = channel.solve_baseline(cfg)
        y = state.y_plus
        exact = y - y**2 / (2.0 * cfg.re_tau)
        assert np.max(np.abs(state.U_plus - exact)) <= 1e-3


class TestMomentumBalance:
    """Converged total shear matches 1 - y+/Re_tau within 1 percent for
    the baseline and every injection mode at both Reynolds numbers."""

    def test_all_states(self, all_injected_states):
        for label, state in all_injected_states.items():
            err = channel.total_shear_error(state)
            assert err < 0.01, f"{label}: total shear off by {err:.3e}"


class TestReferencePropagation:
    def test_clean_propagation_recovers_reference(
        self, frozen_state_1000, synthetic_1000
    ):
        ref = dns.interpolate(synthetic_1000, frozen_state_1000.y_plus)
        rel = np.linalg.norm(frozen_state_1000.U_plus - ref.U_plus) / np.linalg.norm(
            ref.U_plus
        )
        assert rel < 0.01

    def test_noise_robustness(self, frozen_state_1000, frozen_state_noisy_1000):
        clean = frozen_state_1000.U_plus
        noisy = frozen_state_noisy_1000.U_plus
        rel = np.linalg.norm(noisy - clean) / np.linalg.norm(clean)
        assert rel < 0.02


class TestEnvelopes:
    """The trained magnitude forest narrows the data-free envelope while
    keeping it strictly positive in the log layer."""

    def band(self, env):
        y = env.baseline.y_plus
        return (y >= 30.0) & (y <= 300.0)

    def test_data_driven_is_narrower(
        self, envelope_datafree_1000, envelope_datadriven_1000
    ):
        w_free = envelope_datafree_1000.integrated_width()
        w_driven = envelope_datadriven_1000.integrated_width()
        assert w_driven < w_free

    def test_widths_positive_in_log_layer(
        self, envelope_datafree_1000, envelope_datadriven_1000
    ):
        for env in (envelope_datafree_1000, envelope_datadriven_1000):
            mask = self.band(env)
            assert np.sum(mask) > 10
            assert np.min(env.width[mask]) > 0.0


class TestForestTraining:
    def test_holdout_beats_mean_predictor(self, forest_p):
        _, metrics = forest_p
        assert metrics["holdout_mse"] < metrics["holdout_mean_predictor_mse"]

    def test_training_is_deterministic(self, forest_p, settings):
        fitted, _ = forest_p
        refit, _ = pipeline.train_forest(settings, "p")
        probe = np.random.default_rng(0).uniform(0.0, 1.0, size=(200, fitted.n_features))
        assert np.array_equal(fitted.predict(probe), refit.predict(probe))


class TestRealizability:
    """No stress tensor produced by any run violates realizability."""

    def test_zero_violations_everywhere(self, all_injected_states):
        for label, state in all_injected_states.items():
            bad = pipeline.count_realizability_violations(state)
            assert bad == 0, f"{label}: {bad} non-realizable nodes"


class TestFullCorrectionRoundTrip:
    """Perturb a converged field into a synthetic reference, rebuild the
    exact per-node correction targets, and recover the reference
    stresses through the full-anisotropy mode to 1e-8 per node."""

    def test_recover_reference_stresses(self, baseline_180, rng):
        checked = 0
        for tau in baseline_180.tau:
            eig_r = tensors.decompose(tau)
            if eig_r.degenerate:
                continue
            # synthetic reference: shift toward a random interior point
            # and rotate the frame
            w = rng.dirichlet(np.ones(3))
            x_t = (
                w[0] * tensors.CORNER_1C
                + w[1] * tensors.CORNER_2C
                + w[2] * tensors.CORNER_3C
            )
            x_r = tensors.to_barycentric(eig_r).coords()
            make_spec = PerturbationSpec.full_correction(
                x_t - x_r,
                rotation.TaitBryanAngles(*rng.uniform(-0.5, 0.5, size=3)),
            )
            tau_ref = perturb.build_perturbed_stress(eig_r, make_spec)

            # targets exactly as a training-set builder would compute them
            eig_d = tensors.decompose(tau_ref)
            p_corr = (
                tensors.to_barycentric(eig_d).coords()
                - tensors.to_barycentric(eig_r).coords()
            )
            angles = rotation.extract_angles(eig_r.frame, eig_d.frame)

            recovered = perturb.build_perturbed_stress(
                eig_r, PerturbationSpec.full_correction(p_corr, angles)
            )
            err = np.max(np.abs(recovered.matrix() - tau_ref.matrix()))
            assert err <= 1e-8, f"node error {err:.3e}"
            checked += 1
        assert checked > 100
