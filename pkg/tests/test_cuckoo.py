import math
import random
from collections import Counter

import pytest
from scipy import stats

from credstuff.cuckoo import TEST_PARAMS, CuckooFilter, FilterFull, FilterParams, NotFound
from credstuff.group import P256, TEST_GROUP
from oracles import MultisetModel

R = TEST_GROUP.order


def rand_x(rng):
    return rng.getrandbits(128).to_bytes(16, "big")


@pytest.fixture
def filt(rng):
    return CuckooFilter(TEST_PARAMS, R, hash_key=99, rng=rng)


def test_params_validation():
    with pytest.raises(ValueError):
        FilterParams(bucket_count=12)
    with pytest.raises(ValueError):
        FilterParams(bucket_count=8, bucket_capacity=0)
    with pytest.raises(ValueError):
        CuckooFilter(FilterParams(8, fingerprint_space=1 << 16), R)


def test_for_capacity_rule():
    assert FilterParams.for_capacity(128).bucket_count == 16
    assert FilterParams.for_capacity(125).bucket_count == 8
    for ell in (1, 100, 2**9, 2**10, 5000):
        beta = FilterParams.for_capacity(ell).bucket_count
        assert beta * 16 * 0.98 >= ell and (beta == 1 or beta // 2 * 16 * 0.98 < ell)


def test_fprint_odd_and_deterministic(filt, rng):
    for _ in range(10_000):
        x = rand_x(rng)
        fp = filt.fprint(x)
        assert fp & 1 and 1 <= fp < 2 * TEST_PARAMS.fingerprint_space
        assert fp == filt.fprint(x)


def test_fprint_collision_rate(filt, rng):
    n = 20_000
    hits = sum(filt.fprint(rand_x(rng)) == filt.fprint(rand_x(rng)) for _ in range(n))
    p = 1 / TEST_PARAMS.fingerprint_space
    assert abs(hits - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_index_involution_and_degenerate_case(filt, rng):
    h = filt.hasher
    seen_equal = False
    for _ in range(5000):
        x = rand_x(rng)
        i1, i2 = h.indices_for(x)
        fp = h.fprint(x)
        assert h.alt_index(i2, fp) == i1
        assert 0 <= i2 < TEST_PARAMS.bucket_count
        if h.alt_index(0, fp) == 0:
            assert i1 == i2
            seen_equal = True
    assert seen_equal


def test_index_uniform(filt, rng):
    counts = Counter(filt.hasher.index(rand_x(rng)) for _ in range(100_000))
    assert stats.chisquare([counts[k] for k in range(16)]).pvalue > 0.001


def test_insert_contains_delete(filt, rng):
    x = rand_x(rng)
    assert not filt.contains(x)
    filt.insert(x, 5)
    assert filt.contains(x) and len(filt) == 1
    filt.delete(x)
    assert not filt.contains(x) and len(filt) == 0
    with pytest.raises(NotFound):
        filt.delete(x)


def test_duplicate_insert_is_multiset(filt, rng):
    x = rand_x(rng)
    filt.insert(x)
    filt.insert(x)
    filt.delete(x)
    assert filt.contains(x)
    filt.delete(x)
    assert not filt.contains(x)


def test_empty_filter_has_no_members(filt, rng):
    assert not any(filt.contains(rand_x(rng)) for _ in range(2000))
    unhardened = CuckooFilter(TEST_PARAMS, R, rng=rng, random_free_slots=False)
    assert not any(unhardened.contains(rand_x(rng)) for _ in range(2000))


def test_fill_to_98_percent():
    ok = 0
    for seed in range(20):
        rng = random.Random(seed)
        f = CuckooFilter(TEST_PARAMS, R, hash_key=seed, rng=rng)
        target = math.ceil(0.98 * TEST_PARAMS.slots)
        try:
            for _ in range(target):
                f.insert(rand_x(rng))
            ok += 1
        except FilterFull:
            pass
    assert ok >= 18


def test_production_fill_to_98_percent(rng):
    params = FilterParams.for_capacity(2**10)
    f = CuckooFilter(params, P256.order, hash_key=1, rng=rng)
    for _ in range(math.ceil(0.98 * params.slots)):
        f.insert(rand_x(rng))
    assert f.load >= 0.98


def test_filter_full_leaves_state_unchanged(rng):
    params = FilterParams(bucket_count=2, bucket_capacity=1, fingerprint_space=1 << 8, max_kicks=10)
    f = CuckooFilter(params, R, rng=rng)
    inserted = []
    with pytest.raises(FilterFull):
        for _ in range(10):
            x = rand_x(rng)
            before = [row[:] for row in f.matrix]
            f.insert(x)
            inserted.append(x)
    assert f.matrix == before
    assert all(f.contains(x) for x in inserted)


def test_eviction_against_reference_model(rng):
    params = FilterParams(bucket_count=4, bucket_capacity=2, fingerprint_space=1 << 14)
    f = CuckooFilter(params, R, rng=rng)
    model = MultisetModel()
    xs = [rand_x(rng) for _ in range(7)]
    for x in xs:
        f.insert(x)
        model.insert(x)
    for x in xs:
        assert f.contains(x) == model.contains(x)


def test_reference_model_random_ops(rng):
    f = CuckooFilter(TEST_PARAMS, R, rng=rng)
    model = MultisetModel()
    pool = [rand_x(rng) for _ in range(150)]
    fps = 0
    checks = 0
    for _ in range(3000):
        x = rng.choice(pool)
        op = rng.random()
        if op < 0.4 and len(f) < 200:
            f.insert(x)
            model.insert(x)
        elif op < 0.6 and model.contains(x):
            f.delete(x)
            model.delete(x)
        else:
            checks += 1
            got = f.contains(x)
            if model.contains(x):
                assert got
            elif got:
                fps += 1
    assert fps <= 2 * (2 * 16 / 256) * checks


def test_slot_typing_invariant(filt, rng):
    xs = [rand_x(rng) for _ in range(150)]
    for x in xs:
        filt.insert(x)
    for x in xs[:50]:
        filt.delete(x)
    h = filt.hasher
    for row, stamps in enumerate(filt.stamps):
        for bucket, ts in enumerate(stamps):
            v = filt.matrix[row][bucket]
            assert 0 <= v < R
            assert h.is_fingerprint(v) == (ts is not None)


def test_partial_key_consistency(filt, rng):
    for _ in range(150):
        filt.insert(rand_x(rng))
    h = filt.hasher
    for e in filt.entries():
        alt = h.alt_index(e.bucket, e.fingerprint)
        assert h.alt_index(alt, e.fingerprint) == e.bucket


def test_permute_columns(filt, rng):
    xs = [rand_x(rng) for _ in range(120)]
    for x in xs:
        filt.insert(x)
    cols = [sorted(filt.matrix[r][c] for r in range(16)) for c in range(16)]
    before = [filt.contains(x) for x in xs]
    for _ in range(3):
        filt.permute_columns()
    assert [filt.contains(x) for x in xs] == before
    assert [sorted(filt.matrix[r][c] for r in range(16)) for c in range(16)] == cols
    for e in filt.entries():
        assert filt.matrix[e.row][e.bucket] == e.fingerprint


def test_snapshot_roundtrip(filt, rng):
    for k in range(40):
        filt.insert(rand_x(rng), now=1000 + k)
    data = filt.to_bytes()
    g = CuckooFilter.from_bytes(data, rng=rng)
    assert g.matrix == filt.matrix
    assert list(g.entries()) == list(filt.entries())
    assert g.to_bytes() == data
    assert g.hash_key == filt.hash_key


def test_snapshot_layout(filt, rng):
    filt.insert(b"abc", now=-7)
    data = filt.to_bytes()
    assert data[:4] == b"CKF1"
    beta, b = int.from_bytes(data[4:8], "big"), int.from_bytes(data[8:10], "big")
    assert (beta, b) == (16, 16)
    head = 4 + 4 + 2 + 8 + 8 + 4 + 32 + 4
    assert len(data) == head + 32 * 256 + 18
    bucket = int.from_bytes(data[-18:-16], "big")
    fp = int.from_bytes(data[-16:-8], "big")
    ts = int.from_bytes(data[-8:], "big", signed=True)
    assert fp == filt.fprint(b"abc") and ts == -7 and bucket in filt.indices_for(b"abc")


def test_snapshot_rejects_corruption(filt, rng):
    filt.insert(b"abc")
    data = filt.to_bytes()
    with pytest.raises(ValueError):
        CuckooFilter.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        CuckooFilter.from_bytes(data[:-1])
    with pytest.raises(ValueError):
        CuckooFilter.from_bytes(data[:10])
