import random

import pytest

from freshsim.core import (
    Arrival,
    ConfigError,
    ObjectSpec,
    UserTxnSpec,
    Version,
    admit,
    feasibility_check,
    is_fresh,
)


def _version(u, oid="o1"):
    return Version(object_id=oid, value=0.0, sample_time=u, seq=1)


def _txn(read_set, retrieval, analysis, deadline=20, mode="source"):
    return UserTxnSpec(id="t1", read_set=read_set, retrieval_time=retrieval,
                       analysis_time=analysis, relative_deadline=deadline,
                       arrival=Arrival("oneshot", t=0), retrieval_mode=mode)


def _objects(**vis):
    return {oid: ObjectSpec(id=oid, vi=vi, update_period=max(vi // 2, 1))
            for oid, vi in vis.items()}


@pytest.mark.parametrize("u,vi,t,expected", [
    (5, 3, 8, True),    # boundary: still fresh at u + vi
    (5, 3, 9, False),   # one tick past the boundary
    (0, 10, 0, True),   # access at the sampling instant
])
def test_is_fresh_examples(u, vi, t, expected):
    assert is_fresh(_version(u), vi, t) is expected


def test_is_fresh_boundary_property():
    rng = random.Random(7)
    for _ in range(200):
        u = rng.randint(0, 1000)
        vi = rng.randint(1, 100)
        assert is_fresh(_version(u), vi, u + vi)
        assert not is_fresh(_version(u), vi, u + vi + 1)


def test_is_fresh_monotone_in_time():
    rng = random.Random(8)
    for _ in range(200):
        u = rng.randint(0, 500)
        vi = rng.randint(1, 60)
        t2 = rng.randint(u, u + 2 * vi)
        t1 = rng.randint(u, t2)
        if is_fresh(_version(u), vi, t2):
            assert is_fresh(_version(u), vi, t1)


def test_version_extension_moves_expiry():
    v = _version(10)
    assert v.valid_until(5) == 15
    v.vi_extend += 4
    assert v.valid_until(5) == 19
    assert is_fresh(v, 5, 19) and not is_fresh(v, 5, 20)


@pytest.mark.parametrize("vi,r,a,expected", [
    (10, 4, 5, True),   # 9 <= 10
    (9, 4, 5, True),    # boundary: the condition is >=
    (5, 2, 4, False),   # 6 > 5: unbounded-restart shape
])
def test_feasibility_examples(vi, r, a, expected):
    report = feasibility_check(_txn(["o1"], {"o1": r}, {"o1": a}),
                               _objects(o1=vi))
    assert report.passed is expected
    assert report.entries[0].ok is expected


def test_feasibility_lists_every_object():
    objects = _objects(a=10, b=5)
    txn = _txn(["a", "b"], {"a": 4, "b": 2}, {"a": 5, "b": 4})
    report = feasibility_check(txn, objects)
    assert [e.object_id for e in report.entries] == ["a", "b"]
    assert report.failing_objects() == ["b"]
    assert not report.passed


def test_feasibility_unknown_object_is_config_error():
    txn = _txn(["x9"], {"x9": 1}, {"x9": 1})
    with pytest.raises(ConfigError) as err:
        feasibility_check(txn, _objects(o1=10))
    assert "x9" in str(err.value)


@pytest.mark.parametrize("vi,r,a,enforce,admitted", [
    (5, 2, 4, True, False),
    (5, 2, 4, False, True),
    (10, 4, 5, True, True),
])
def test_admit_examples(vi, r, a, enforce, admitted):
    decision = admit(_txn(["o1"], {"o1": r}, {"o1": a}), _objects(o1=vi), enforce)
    assert decision.admitted is admitted


def test_txn_validation_rules():
    errors = []
    txn = UserTxnSpec(id="t", read_set=[], retrieval_time={}, analysis_time={},
                      relative_deadline=0,
                      arrival=Arrival("periodic", start=0, period=0),
                      retrieval_mode="bogus")
    txn.validate("transactions[0]", {"o1"}, errors)
    paths = {p for p, _ in errors}
    assert "transactions[0].read_set" in paths
    assert "transactions[0].deadline" in paths
    assert "transactions[0].retrieval_mode" in paths
    assert "transactions[0].arrival.period" in paths


def test_store_mode_allows_zero_retrieval_time():
    errors = []
    txn = _txn(["o1"], {"o1": 0}, {"o1": 4}, mode="store")
    txn.validate("transactions[0]", {"o1"}, errors)
    assert errors == []
    # but a source-capable transaction must budget real retrieval time
    errors = []
    txn = _txn(["o1"], {"o1": 0}, {"o1": 4}, mode="store_then_source")
    txn.validate("transactions[0]", {"o1"}, errors)
    assert any("retrieval" in p for p, _ in errors)
