import numpy as np
import pytest

from eigenuq import channel, dns
from eigenuq.dns import ProfileParseError


class TestParseProfile:
    TEXT = "\n".join(
        [
            "% header comment",
            "# another comment style",
            "0.0   0.0  0.0 0.0  0.0",
            "0.25 45.0  1.2 0.9 -0.4",
            "0.5  90.0  2.0 1.0 -0.6",
            "1.0 180.0  3.5 1.1  0.0",
        ]
    )

    def test_basic_parse(self):
        prof = dns.parse_profile(
            self.TEXT,
            {"y_delta": 0, "y_plus": 1, "uu_plus": 2, "vv_plus": 3, "uv_plus": 4},
            re_tau=180.0,
        )
        assert np.allclose(prof.y_plus, [0.0, 45.0, 90.0, 180.0])
        assert np.allclose(prof.uu_plus, [0.0, 1.2, 2.0, 3.5])
        assert np.allclose(prof.uv_plus, [0.0, -0.4, -0.6, 0.0])
        # unmapped columns default to zero
        assert np.allclose(prof.U_plus, 0.0)

    def test_y_delta_scaling(self):
        prof = dns.parse_profile(self.TEXT, {"y_delta": 0}, re_tau=180.0)
        assert np.allclose(prof.y_plus, [0.0, 45.0, 90.0, 180.0])

    def test_rows_sorted_by_wall_distance(self):
        scrambled = "\n".join(
            ["1.0 3.0", "0.0 1.0", "0.5 2.0"]
        )
        prof = dns.parse_profile(scrambled, {"y_plus": 0, "U_plus": 1}, re_tau=1.0)
        assert np.allclose(prof.y_plus, [0.0, 0.5, 1.0])
        assert np.allclose(prof.U_plus, [1.0, 2.0, 3.0])

    def test_unknown_column_name(self):
        with pytest.raises(ProfileParseError, match="unknown column"):
            dns.parse_profile(self.TEXT, {"pressure": 0, "y_plus": 1}, re_tau=180.0)

    def test_column_out_of_range(self):
        with pytest.raises(ProfileParseError, match="out of range"):
            dns.parse_profile(self.TEXT, {"y_plus": 9}, re_tau=180.0)

    def test_missing_wall_distance_column(self):
        with pytest.raises(ProfileParseError, match="y_plus or y_delta"):
            dns.parse_profile(self.TEXT, {"U_plus": 2}, re_tau=180.0)


class TestWriteLoadRoundTrip:
    def test_round_trip(self, tmp_path):
        prof = dns.synthetic_profile(180.0, n_points=64)
        path = tmp_path / "profile.dat"
        dns.write_profile(prof, path)
        back = dns.load_profile(path, re_tau=180.0)
        assert np.allclose(back.y_plus, prof.y_plus, atol=1e-9)
        assert np.allclose(back.U_plus, prof.U_plus, atol=1e-9)
        assert np.allclose(back.uv_plus, prof.uv_plus, atol=1e-9)

    def test_custom_column_map(self, tmp_path):
        prof = dns.synthetic_profile(180.0, n_points=32)
        path = tmp_path / "profile.dat"
        dns.write_profile(prof, path)
        back = dns.load_profile(
            path, column_map={"y_plus": 1, "U_plus": 2}, re_tau=180.0
        )
        assert np.allclose(back.U_plus, prof.U_plus, atol=1e-9)
        assert np.allclose(back.uu_plus, 0.0)


class TestInterpolate:
    def test_values_reproduced_on_same_grid(self):
        prof = dns.synthetic_profile(550.0, n_points=128)
        out = dns.interpolate(prof, prof.y_plus)
        assert np.allclose(out.U_plus, prof.U_plus, atol=1e-12)

    def test_monotone_no_overshoot(self):
        prof = dns.synthetic_profile(550.0, n_points=128)
        fine = np.linspace(0.0, 550.0, 2000)
        out = dns.interpolate(prof, fine)
        assert np.all(np.diff(out.U_plus) >= -1e-9)
        assert out.U_plus.max() <= prof.U_plus.max() + 1e-9

    def test_targets_outside_domain_rejected(self):
        prof = dns.synthetic_profile(180.0, n_points=32)
        with pytest.raises(ValueError, match="outside"):
            dns.interpolate(prof, [0.0, 200.0])


class TestSyntheticProfile:
    def test_validates_and_has_expected_shape(self):
        prof = dns.synthetic_profile(1000.0)
        prof.validate()
        assert prof.y_plus[0] == 0.0
        assert prof.y_plus[-1] == pytest.approx(1000.0)
        assert np.all(np.diff(prof.y_plus) > 0)

    def test_physical_structure(self):
        prof = dns.synthetic_profile(1000.0)
        # no-slip and monotone mean flow
        assert prof.U_plus[0] == 0.0
        assert np.all(np.diff(prof.U_plus) >= 0)
        # shear stress is negative in the bulk, zero at wall and centerline
        assert prof.uv_plus[0] == pytest.approx(0.0, abs=1e-8)
        assert np.min(prof.uv_plus) < -0.5
        # normal stresses are nonnegative
        assert np.all(prof.uu_plus >= 0)
        assert np.all(prof.vv_plus >= 0)
        assert np.all(prof.ww_plus >= 0)

    def test_log_layer_velocity_magnitude(self):
        prof = dns.synthetic_profile(1000.0)
        i = np.searchsorted(prof.y_plus, 100.0)
        u_log = np.log(100.0) / 0.41 + 5.0
        assert abs(prof.U_plus[i] - u_log) < 2.0


@pytest.fixture(scope="module")
def state_and_profile():
    cfg = channel.ChannelConfig(re_tau=180.0, n_cells=64)
    st = channel.solve_baseline(cfg)
    prof = dns.interpolate(dns.synthetic_profile(180.0), st.y_plus)
    return st, prof


class TestBuildTargets:

    def test_grid_mismatch_rejected(self, state_and_profile):
        st, _ = state_and_profile
        coarse = dns.synthetic_profile(180.0, n_points=32)
        with pytest.raises(ValueError, match="interpolate first"):
            dns.build_targets(st, coarse, "p")

    def test_unknown_kind_rejected(self, state_and_profile):
        st, prof = state_and_profile
        with pytest.raises(ValueError, match="unknown target kind"):
            dns.build_targets(st, prof, "q")

    @pytest.mark.parametrize("kind", dns.TARGET_KINDS)
    def test_shapes_and_names(self, state_and_profile, kind):
        st, prof = state_and_profile
        ts = dns.build_targets(st, prof, kind)
        assert ts.target_names == dns.TARGET_NAMES[kind]
        assert ts.Y.shape == (ts.X.shape[0], len(dns.TARGET_NAMES[kind]))
        assert ts.X.shape[0] + ts.n_excluded == len(st.y_plus)
        assert len(ts.provenance) == ts.X.shape[0]

    def test_magnitude_is_norm_of_vector_targets(self, state_and_profile):
        st, prof = state_and_profile
        p = dns.build_targets(st, prof, "p")
        pc = dns.build_targets(st, prof, "pcorr")
        assert np.allclose(
            p.Y[:, 0], np.linalg.norm(pc.Y, axis=1), atol=1e-12
        )

    def test_extend_concatenates(self, state_and_profile):
        st, prof = state_and_profile
        a = dns.build_targets(st, prof, "p")
        b = dns.build_targets(st, prof, "p")
        n = a.X.shape[0]
        a.extend(b)
        assert a.X.shape[0] == 2 * n
        assert a.Y.shape[0] == 2 * n
        assert len(a.provenance) == 2 * n

    def test_training_csv(self, state_and_profile, tmp_path):
        st, prof = state_and_profile
        ts = dns.build_targets(st, prof, "pcorr")
        path = tmp_path / "train.csv"
        dns.write_training_csv(ts, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0].split(",")[: len(ts.feature_names)] == ts.feature_names
        assert len(lines) == ts.X.shape[0] + 1
