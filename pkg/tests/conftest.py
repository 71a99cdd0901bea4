"""Shared fixtures: synthetic datasets in the native record layout, plus the
independent direct-convolution oracle used by the conv tests."""

from __future__ import annotations

import numpy as np
import pytest

from triplenet.data import (CIFAR10_TEST_FILE, CIFAR10_TRAIN_FILES,
                            SVHN_TEST_FILE, SVHN_TRAIN_FILE, write_record_file)


def naive_conv2d(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Direct-loop cross-correlation oracle (float64), deliberately naive."""
    b, cin, h, wdt = x.shape
    cout, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wdt + 2 * pad - kw) // stride + 1
    out = np.zeros((b, cout, ho, wo), dtype=np.float64)
    for bi in range(b):
        for co in range(cout):
            for oi in range(ho):
                for oj in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                ii = oi * stride + u - pad
                                jj = oj * stride + v - pad
                                if 0 <= ii < h and 0 <= jj < wdt:
                                    acc += float(x[bi, ci, ii, jj]) * \
                                           float(w[co, ci, u, v])
                    out[bi, co, oi, oj] = acc
    return out


def class_structured_images(rng: np.random.Generator, labels: np.ndarray
                            ) -> np.ndarray:
    """Byte images whose class is recoverable from a per-class prototype."""
    protos = rng.integers(0, 256, (10, 3, 32, 32)).astype(np.float32)
    noise = rng.normal(0.0, 24.0, (len(labels), 3, 32, 32)).astype(np.float32)
    return np.clip(protos[labels] + noise, 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def cifar_dir(tmp_path_factory):
    """Full-size synthetic stand-in for the CIFAR-10 binary distribution.

    Six files of exactly 10,000 records each, byte-for-byte the official
    layout.  Images carry learnable class structure so training smoke tests
    can make progress.  Point TRIPLENET_DATA_DIR at a real copy to train on
    actual data; this fixture only exercises the contracted file format.
    """
    root = tmp_path_factory.mktemp("cifar10-bin")
    rng = np.random.default_rng(20240901)
    for fname in CIFAR10_TRAIN_FILES + (CIFAR10_TEST_FILE,):
        labels = rng.integers(0, 10, 10_000).astype(np.uint8)
        write_record_file(root / fname, class_structured_images(rng, labels),
                          labels)
    return root


@pytest.fixture(scope="session")
def svhn_dir(tmp_path_factory):
    """Small converted-SVHN fixture (arbitrary record counts are allowed)."""
    root = tmp_path_factory.mktemp("svhn-bin")
    rng = np.random.default_rng(7)
    for fname, n in ((SVHN_TRAIN_FILE, 96), (SVHN_TEST_FILE, 32)):
        labels = (np.arange(n) % 10).astype(np.uint8)
        write_record_file(root / fname, class_structured_images(rng, labels),
                          labels)
    return root
