import filecmp
import warnings
from pathlib import Path

import numpy as np
import pytest

from vtslip.dataset import (GraspEpisode, TactileCalibration, forces_to_image, load_dataset, make_windows,
                            split_by_object, write_dataset)
from vtslip.errors import DataError, ValidationError

FIXTURES = Path(__file__).parent / "fixtures"


def episode(eid="e", obj="o", frames=13, label=1, embed=4, seed=0):
    rng = np.random.default_rng(seed)
    return GraspEpisode(eid, obj, label, rng.normal(size=(frames, 4, 4, 3)), rng.normal(size=(frames, embed)))


class TestForcesToImage:
    cal = TactileCalibration((-5, 5), (-5, 5), (0, 10), tare=False)

    def test_zero_forces(self):
        img = forces_to_image(np.zeros((4, 4, 3)), self.cal)
        assert img.shape == (3, 4, 4)
        np.testing.assert_array_equal(img[0], 0.5)
        np.testing.assert_array_equal(img[1], 0.5)
        np.testing.assert_array_equal(img[2], 0.0)

    def test_max_reading_clamps_to_one(self):
        f = np.broadcast_to([5.0, 5.0, 10.0], (4, 4, 3))
        np.testing.assert_array_equal(forces_to_image(f, self.cal), 1.0)
        np.testing.assert_array_equal(forces_to_image(f * 3, self.cal), 1.0)

    def test_affine_value(self):
        f = np.zeros((4, 4, 3))
        f[..., 0] = 2.5
        assert forces_to_image(f, self.cal)[0, 0, 0] == 0.75

    def test_tare_subtracts_baseline(self):
        cal = TactileCalibration((-5, 5), (-5, 5), (0, 10), tare=True)
        base = np.full((4, 4, 3), 1.0)
        np.testing.assert_array_equal(forces_to_image(base, cal, baseline=base)[2], 0.0)

    def test_non_finite_names_taxel(self):
        f = np.zeros((4, 4, 3))
        f[2, 1, 0] = np.nan
        with pytest.raises(DataError, match="taxel 9"):
            forces_to_image(f, self.cal)


class TestWindows:
    @pytest.mark.parametrize("frames, count", [(21, 9), (13, 1), (20, 8)])
    def test_counts(self, frames, count):
        assert len(make_windows(episode(frames=frames), 13)) == count

    def test_window_contents(self):
        ep = episode(frames=15)
        ws = make_windows(ep, 13, stride=2)
        assert [w.source[1] for w in ws] == [0, 2]
        np.testing.assert_array_equal(ws[1].x_v, ep.visual[2:15])
        assert ws[1].x_t.shape == (13, 3, 4, 4)

    def test_too_short(self):
        with pytest.raises(DataError):
            make_windows(episode(frames=13), 14)


class TestSplit:
    def test_disjoint_routing(self):
        eps = [episode("a", "A", 21), episode("b", "B", 21, seed=1)]
        train, test = split_by_object(eps, {"A"}, {"B"})
        assert (len(train), len(test)) == (9, 9)
        assert {w.object_id for w in train} == {"A"}

    def test_forty_ten_split_shares_nothing(self):
        eps = [episode(f"e{i}", f"obj{i}") for i in range(50)]
        train, test = split_by_object(eps, {f"obj{i}" for i in range(40)}, {f"obj{i}" for i in range(40, 50)})
        assert not {w.object_id for w in train} & {w.object_id for w in test}

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError):
            split_by_object([episode()], {"o"}, {"o"})

    def test_empty_test_warns(self):
        with pytest.warns(UserWarning):
            train, test = split_by_object([episode()], {"o"}, set())
        assert test == [] and len(train) == 1


class TestValidation:
    def test_short_episode(self):
        with pytest.raises(DataError, match="12 frames"):
            episode(frames=12).validate()

    def test_count_mismatch_message(self):
        ep = episode(frames=14)
        ep.visual = ep.visual[:13]
        with pytest.raises(DataError, match="14.*13"):
            ep.validate()


class TestDiskFormat:
    def test_golden_fixture_loads(self):
        d = load_dataset(FIXTURES / "golden")
        assert (len(d.episodes), len(d.errors)) == (2, 0)
        mug, sponge = d.episodes
        assert mug.visual.shape == (14, 4) and sponge.visual.shape == (13, 3, 8, 8)
        assert d.splits == {"mug": "train", "sponge": "test"}

    def test_round_trip_is_byte_identical(self, tmp_path):
        src = FIXTURES / "golden"
        first = load_dataset(src)
        write_dataset(tmp_path, first.episodes, first.splits, ["ep_mug_01", "ep_sponge_01"])
        for name in ("ep_mug_01", "ep_sponge_01"):
            assert filecmp.cmp(src / name / "tactile.csv", tmp_path / name / "tactile.csv", shallow=False)
            assert filecmp.cmp(src / name / "meta.json", tmp_path / name / "meta.json", shallow=False)
        assert filecmp.cmp(src / "ep_mug_01" / "visual.emb", tmp_path / "ep_mug_01" / "visual.emb", shallow=False)
        second = load_dataset(tmp_path)
        for a, b in zip(first.episodes, second.episodes):
            assert (a.episode_id, a.object_id, a.label, a.grasp_width_mm) == (b.episode_id, b.object_id, b.label,
                                                                              b.grasp_width_mm)
            np.testing.assert_array_equal(a.tactile, b.tactile)
            np.testing.assert_array_equal(a.visual, b.visual)

    def test_malformed_fixture_records(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            d = load_dataset(FIXTURES / "malformed")
        assert [ep.episode_id for ep in d.episodes] == ["ok_01"]
        errors = {e.episode: e.message for e in d.errors}
        assert set(errors) == {"ep_short", "ep_mismatch"}
        assert "12 frames" in errors["ep_short"]
        assert "14" in errors["ep_mismatch"] and "13" in errors["ep_mismatch"]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path)

    def test_missing_visual_is_an_error_record(self, tmp_path):
        write_dataset(tmp_path, [episode("x", "o")])
        (tmp_path / "x" / "visual.emb").unlink()
        d = load_dataset(tmp_path)
        assert d.episodes == [] and "visual" in d.errors[0].message
