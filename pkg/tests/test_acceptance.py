"""Acceptance suite: one test per criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report.  The CIFAR-10 fixture is a byte-exact synthetic replica of the
official binary layout (see conftest.cifar_dir); point TRIPLENET_DATA_DIR at
a real copy to exercise the genuine files.
"""

import time

import numpy as np

from conftest import naive_conv2d
from triplenet import costs as C
from triplenet import data as D
from triplenet import graph as G
from triplenet import tensor as T
from triplenet import training as TR
from triplenet.bench import run_benchmark
from triplenet.connectivity import dense_links, harmonic_links
from triplenet.gradcheck import run_all


def _report(criterion: int, message: str) -> None:
    print(f"[acceptance] criterion {criterion:2d}: PASS - {message}")


def test_criterion_01_connectivity_oracle_equivalence():
    start = time.perf_counter()
    for n in range(1, 65):
        if n % 2 == 1:
            expected = {n - 1}
        else:
            expected = {n - hop for hop in (2, 4, 8, 16, 32) if hop <= n}
        assert set(harmonic_links(n).sources) == expected, n
        assert dense_links(n).sources == tuple(range(n)), n
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(1, f"links for n in [1,64] match the brute-force enumeration "
               f"({elapsed:.3f}s)")


def test_criterion_02_shape_contract():
    for variant, final in (("s", 720), ("b", 1080)):
        graph = G.build(G.model_config(variant, input_size=224), seed=0)
        assert G.stage_sizes(graph) == [112, 56, 28, 14, 14, 7, 1]
        rows = {name: shape for name, _, shape in G.dry_run_shapes(graph, 1)}
        assert rows[graph.stage_nodes["block5"]] == (1, final, 7, 7)
        assert rows["classifier/gap"] == (1, final, 1, 1)
    _report(2, "stage sizes 112/56/28/14/14/7/1 and final widths 720/1080")


def test_criterion_03_parameter_count_internal_consistency():
    for variant in ("s", "b"):
        for size in (224, 32):
            graph = G.build(G.model_config(variant, input_size=size), seed=0)
            report = C.analyze(graph)
            assert report.totals.params == graph.parameter_count()
    _report(3, "analyzer totals equal materialized trainable scalars "
               "for S/B at 224 and 32")


def test_criterion_04_parameter_count_published_diagnostic():
    bands = {"s": (8_000_000, 11_500_000), "b": (10_500_000, 15_000_000)}
    notes = []
    for variant, (lo, hi) in bands.items():
        graph = G.build(G.model_config(variant, input_size=224), seed=0)
        report = C.analyze(graph)
        params = report.totals.params
        assert lo <= params <= hi, f"{variant}: {params} outside [{lo}, {hi}]"
        ref = C.PUBLISHED_PARAMS[variant]
        dev = 100.0 * (params - ref) / ref
        text = C.render_text(report)
        assert "deviation" in text and report.readings["bottleneck-3x3"] in text
        notes.append(f"{variant}={params / 1e6:.2f}M ({dev:+.1f}% vs "
                     f"{ref / 1e6:.2f}M, reading "
                     f"{report.readings['bottleneck-3x3']})")
    _report(4, "; ".join(notes))


def test_criterion_05_madd_flops_ratio():
    ratios = []
    for variant in ("s", "b"):
        report = C.analyze(G.build(G.model_config(variant, input_size=224),
                                   seed=0))
        ratio = report.totals.madd / report.totals.macs
        assert 1.9 <= ratio <= 2.1
        ratios.append(f"{variant}={ratio:.3f}")
    _report(5, "madd/macs " + ", ".join(ratios))


def test_criterion_06_gradient_soundness():
    start = time.perf_counter()
    results = run_all(seed=0, instances=5, h=1e-4, tol=1e-3)
    elapsed = time.perf_counter() - start
    names = {r.name for r in results}
    assert {"conv2d", "batchnorm2d", "relu", "maxpool2d", "avgpool2d",
            "concat_channels", "add", "linear",
            "softmax_cross_entropy"} <= names
    worst = max(results, key=lambda r: r.max_rel_error)
    for r in results:
        assert r.passed, f"{r.name}: {r.max_rel_error:.3e}"
    assert elapsed < 60.0
    _report(6, f"{len(results)} primitives, worst {worst.name} "
               f"{worst.max_rel_error:.2e} < 1e-3 ({elapsed:.1f}s)")


def test_criterion_07_convolution_oracle():
    rng = np.random.default_rng(42)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        b = int(rng.integers(1, 3))
        cin = int(rng.integers(1, 9))
        cout = int(rng.integers(1, 9))
        h = int(rng.integers(4, 17))
        w = int(rng.integers(4, 17))
        k = 3 if rng.integers(2) else 1
        stride = int(rng.integers(1, 3))
        pad = 1 if k == 3 else 0
        x = rng.standard_normal((b, cin, h, w)).astype(np.float32)
        kern = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
        ours = T.conv2d(T.Tensor(x), T.Tensor(kern), stride=stride,
                        pad=pad).data
        oracle = naive_conv2d(x, kern, stride=stride, pad=pad)
        rel = np.abs(ours - oracle).max() / max(np.abs(oracle).max(), 1e-12)
        worst = max(worst, rel)
        assert rel < 1e-5
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _report(7, f"20 random shapes up to [2,8,16,16], worst rel {worst:.2e} "
               f"({elapsed:.1f}s)")


def test_criterion_08_overfit_smoke_training(cifar_dir):
    start = time.perf_counter()
    train_full, _ = D.load_cifar10(cifar_dir)
    train_set = D.subset(train_full, 500)
    mean, std = D.channel_stats(train_set)
    graph = G.build(G.model_config("s", input_size=32, num_classes=10), seed=0)
    config = TR.TrainConfig(epochs=5, batch_size=64, seed=0)
    history = TR.train(graph, train_set, config, mean=mean, std=std)
    elapsed = time.perf_counter() - start
    assert len(history) == 5
    assert all(np.isfinite(m.train_loss) for m in history)
    first, final = history[0].train_loss, history[-1].train_loss
    assert final <= 0.5 * first, f"loss {first:.4f} -> {final:.4f}"
    assert elapsed < 1800.0
    _report(8, f"500-image subset, 5 epochs: loss {first:.3f} -> {final:.4f} "
               f"(ratio {final / first:.3f} <= 0.5) in {elapsed:.0f}s")


def test_criterion_09_dataset_ingestion(cifar_dir, svhn_dir, tmp_path):
    train, test = D.load_cifar10(cifar_dir)
    assert (len(train), len(test)) == (50_000, 10_000)
    for ds in (train, test):
        assert ds.labels.min() >= 0 and ds.labels.max() < 10

    image = (np.arange(D.IMAGE_BYTES) % 256).astype(np.uint8)\
        .reshape(1, 3, 32, 32)
    path = tmp_path / "one.bin"
    D.write_record_file(path, image, np.array([7], np.uint8))
    images, labels = D.read_record_file(path)
    assert labels.tolist() == [7]
    assert np.array_equal(images, image)
    assert path.read_bytes() == bytes([7]) + image.tobytes()

    svhn_train, svhn_test = D.load_svhn(svhn_dir)
    assert svhn_train.images.shape == (96, 3, 32, 32)
    assert svhn_test.images.shape == (32, 3, 32, 32)
    _report(9, "50,000/10,000 split, bit-exact fixture round-trip, "
               "converted-SVHN fixture parses")


def test_criterion_10_lr_schedule():
    config = TR.TrainConfig(epochs=200)
    rates = [TR.lr_at(e, config) for e in range(200)]
    assert rates[0] == rates[74] == 1e-3
    assert rates[75] == rates[149] == 2e-4
    assert rates[150] == rates[199] == 4e-5
    assert sorted(set(rates), reverse=True) == [1e-3, 2e-4, 4e-5]
    _report(10, "1e-3 / 2e-4 / 4e-5 with transitions at epochs 75 and 150")


def test_criterion_11_benchmark_direction():
    # interleave S/B chunks so host-load drift hits both variants equally;
    # the assertion is still on each variant's pooled per-image mean
    graphs = {v: G.build(G.model_config(v, input_size=32), seed=0)
              for v in ("s", "b")}
    totals = {"s": 0.0, "b": 0.0}
    images_per_chunk, chunks = 50, 8
    for chunk in range(chunks):
        warmup = 10 if chunk == 0 else 2
        for variant in ("s", "b"):
            result = run_benchmark(graphs[variant], images=images_per_chunk,
                                   warmup=warmup, seed=chunk)
            totals[variant] += result.total_seconds
    n = images_per_chunk * chunks
    mean_s, mean_b = (1000.0 * totals[v] / n for v in ("s", "b"))
    assert mean_s < mean_b, f"S {mean_s:.2f}ms vs B {mean_b:.2f}ms"
    _report(11, f"per-image latency S {mean_s:.2f}ms < B {mean_b:.2f}ms over "
                f"{n} images each (host-relative; published absolute times "
                f"not reproduced)")


def test_criterion_12_determinism(cifar_dir, tmp_path):
    cfg = G.model_config("s", input_size=32)
    x = T.Tensor(np.random.default_rng(5)
                 .standard_normal((2, 3, 32, 32)).astype(np.float32))
    logits = [G.forward(G.build(cfg, seed=3), x, "eval").data
              for _ in range(2)]
    assert np.array_equal(logits[0], logits[1])

    train_full, _ = D.load_cifar10(cifar_dir)
    train_set = D.subset(train_full, 128)
    logs = []
    for name in ("a", "b"):
        graph = G.build(cfg, seed=3)
        config = TR.TrainConfig(epochs=1, batch_size=64, seed=3)
        log_path = tmp_path / f"{name}.log"
        history = TR.train(graph, train_set, config, log_path=log_path)
        logs.append((log_path.read_bytes(), [m.train_loss for m in history]))
    assert logs[0] == logs[1]
    _report(12, "bit-identical eval logits and identical training logs "
                "across two seeded runs")
