import json

import numpy as np
import pytest

from conftest import random_dataset
from igcn.data import (
    PARAMS_MAGIC,
    DatasetManifest,
    SyntheticSpec,
    datasets_equal,
    generate_synthetic,
    load_dataset,
    load_params,
    read_edges,
    read_features,
    save_dataset,
    save_params,
    write_csv,
    write_features,
    write_labels,
)
from igcn.graph import cosine_similarity_matrix
from igcn.model import init_params


def write_manifest(tmp_path, rows=(10, 10), edges=None, labels=None):
    rng = np.random.default_rng(0)
    mods = []
    for i, r in enumerate(rows):
        write_features(tmp_path / f"m{i}.csv", rng.normal(size=(r, 4)))
        mods.append({"name": f"m{i}", "features": f"m{i}.csv", "edges": edges})
    write_labels(tmp_path / "labels.csv", labels if labels is not None else np.arange(rows[0]) % 2)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"modalities": mods, "labels": "labels.csv", "k": 2}))
    return path


class TestLoadDataset:
    def test_shapes(self, tmp_path):
        ds = load_dataset(DatasetManifest.load(write_manifest(tmp_path)), split_seed=0)
        assert ds.num_modalities == 2 and ds.num_nodes == 10
        assert ds.feature_dims == [4, 4]
        for mod in ds.modalities:
            assert mod.report.achieved_avg_degree >= 2

    def test_row_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="rows"):
            load_dataset(DatasetManifest.load(write_manifest(tmp_path, rows=(10, 9))))

    def test_label_out_of_range(self, tmp_path):
        path = write_manifest(tmp_path)
        raw = json.loads(path.read_text())
        raw["num_classes"] = 1
        path.write_text(json.dumps(raw))
        with pytest.raises(ValueError, match="label"):
            load_dataset(DatasetManifest.load(path))

    def test_missing_file(self, tmp_path):
        path = write_manifest(tmp_path)
        (tmp_path / "m1.csv").unlink()
        with pytest.raises(ValueError, match="cannot read"):
            load_dataset(DatasetManifest.load(path))

    def test_edge_list_is_symmetrized(self, tmp_path):
        write_csv(tmp_path / "edges.csv", ["src", "dst", "weight"], [[3, 7, 1.0]])
        ds = load_dataset(DatasetManifest.load(write_manifest(tmp_path, edges="edges.csv")))
        adj = ds.modalities[0].adjacency
        assert adj.edge_set() == {(3, 7)}
        dense = adj.to_dense()
        assert dense[3, 7] == dense[7, 3] == 1.0

    def test_edge_list_dedup_and_self_loops_dropped(self, tmp_path):
        write_csv(tmp_path / "e.csv", ["src", "dst", "weight"], [[0, 1, 1.0], [1, 0, 2.0], [2, 2, 1.0], [1, 2, 0.5]])
        adj = read_edges(tmp_path / "e.csv", 4)
        assert adj.edge_set() == {(0, 1), (1, 2)}
        assert adj.to_dense()[0, 1] == 2.0
        assert not adj.has_diagonal()

    def test_edge_out_of_range(self, tmp_path):
        write_csv(tmp_path / "e.csv", ["src", "dst", "weight"], [[0, 9, 1.0]])
        with pytest.raises(ValueError):
            read_edges(tmp_path / "e.csv", 4)

    def test_unordered_node_ids(self, tmp_path):
        write_csv(tmp_path / "f.csv", ["node_id", "a"], [[1, "2.0"], [0, "1.0"]])
        np.testing.assert_array_equal(read_features(tmp_path / "f.csv"), [[1.0], [2.0]])

    def test_round_trip(self, tmp_path):
        ds = load_dataset(DatasetManifest.load(write_manifest(tmp_path)), split_seed=3)
        manifest = save_dataset(ds, tmp_path / "copy")
        again = load_dataset(DatasetManifest.load(manifest))
        assert datasets_equal(ds, again)

    def test_round_trip_random(self, tmp_path):
        ds = random_dataset(9, m=20, p=3)
        again = load_dataset(DatasetManifest.load(save_dataset(ds, tmp_path)))
        assert datasets_equal(ds, again)


class TestSynthetic:
    def test_shapes_and_balance(self):
        ds = generate_synthetic(SyntheticSpec(num_nodes=60, feature_dims=(8, 8), informative=(0, 1, 0)))
        assert [m.features.shape for m in ds.modalities] == [(60, 8), (60, 8)]
        assert np.bincount(ds.labels).tolist() == [20, 20, 20]

    def test_noise_free_rows_identical(self):
        spec = SyntheticSpec(num_nodes=30, feature_dims=(5, 5), informative=(0, 1, 0), noise_scale=0.0)
        ds = generate_synthetic(spec)
        x = ds.modalities[0].features
        s = cosine_similarity_matrix(x)
        idx = np.flatnonzero(ds.labels == 0)
        assert np.all(x[idx] == x[idx[0]])
        np.testing.assert_allclose(s[np.ix_(idx, idx)][~np.eye(idx.size, dtype=bool)], 1.0, atol=1e-12)

    def test_files_deterministic(self, tmp_path):
        spec = SyntheticSpec(num_nodes=30, feature_dims=(4, 6))
        generate_synthetic(spec, tmp_path / "a")
        generate_synthetic(spec, tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_persisted_manifest_reloads(self, tmp_path):
        spec = SyntheticSpec(num_nodes=30, feature_dims=(4, 6), seed=4)
        ds = generate_synthetic(spec, tmp_path)
        again = load_dataset(DatasetManifest.load(tmp_path / "manifest.json"), split_seed=4)
        assert datasets_equal(ds, again)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(feature_dims=(3,)), dict(informative=(0, 1)), dict(informative=(0, 2, 0)), dict(num_nodes=5), dict(noise_scale=-1)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SyntheticSpec(**kwargs)


class TestParamContainer:
    @pytest.mark.parametrize("variant", ["full", "no-attention", "mlp-head"])
    def test_round_trip(self, tmp_path, variant):
        params = init_params([3, 5, 2], 4, 3, seed=1, variant=variant)
        save_params(tmp_path / "p.igcn", params)
        assert load_params(tmp_path / "p.igcn") == params

    def test_layout(self, tmp_path):
        params = init_params([3], 2, 2, seed=0)
        save_params(tmp_path / "p.igcn", params)
        raw = (tmp_path / "p.igcn").read_bytes()
        assert raw.startswith(PARAMS_MAGIC)
        assert int.from_bytes(raw[8:12], "little") == 1
        # data block is the tail: all tensors as little-endian f64
        n_values = sum(t.size for t in params.tensors())
        tail = np.frombuffer(raw[-8 * n_values :], dtype="<f8")
        np.testing.assert_array_equal(tail, np.concatenate([t.ravel() for t in params.tensors()]))

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"not a model")
        with pytest.raises(ValueError):
            load_params(tmp_path / "x")

    def test_truncated(self, tmp_path):
        params = init_params([3], 2, 2, seed=0)
        save_params(tmp_path / "p.igcn", params)
        (tmp_path / "q.igcn").write_bytes((tmp_path / "p.igcn").read_bytes()[:-5])
        with pytest.raises(ValueError):
            load_params(tmp_path / "q.igcn")
