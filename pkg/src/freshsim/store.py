"""Version store for temporal objects.

Keeps an ascending chain of versions per object and implements the two read
disciplines:

* classical: one live version per object; installing a new version replaces
  the previous one, and any transaction still pinning the replaced version is
  told to restart.
* multiversion: superseded versions are retained while pinned, so an in-flight
  transaction may finish its analysis on the version that was fresh when it
  accessed the object, even if that version expires or is replaced before the
  transaction commits.

New accesses are only ever served the newest version; history exists purely to
let in-flight readers finish. All mutation happens on the simulation thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .core import (
    ConfigError,
    FreshnessMode,
    SimInternalError,
    Tick,
    Version,
    is_fresh,
)

TraceFn = Callable[[dict], None]


@dataclass
class ReadResult:
    version: Version
    access_time: Tick
    fresh_at_access: bool


@dataclass
class ObjectStoreStats:
    live_versions: int = 0
    peak_live_versions: int = 0
    active_pins: int = 0
    peak_active_pins: int = 0
    reclaimed: int = 0


class VersionStore:
    """Per-run store of version chains, pinning, and garbage collection.

    `vis` maps object id to its effective validity interval (after any
    config-time period rescaling). A version's expiry instant additionally
    includes per-version extensions granted by skipped updates.
    """

    def __init__(self, mode: FreshnessMode, vis: dict[str, Tick],
                 trace: TraceFn | None = None,
                 on_superseded_pinned: Callable[[Version], None] | None = None):
        self.mode = mode
        self.vis = dict(vis)
        self.trace = trace
        self.on_superseded_pinned = on_superseded_pinned
        self.chains: dict[str, list[Version]] = {oid: [] for oid in vis}
        self.stats: dict[str, ObjectStoreStats] = {oid: ObjectStoreStats() for oid in vis}

    # -- helpers -----------------------------------------------------------

    def _chain(self, object_id: str) -> list[Version]:
        try:
            return self.chains[object_id]
        except KeyError:
            raise ConfigError([("store", f"unknown object id {object_id!r}")]) from None

    def vi_of(self, object_id: str) -> Tick:
        return self.vis[object_id]

    def newest(self, object_id: str) -> Version | None:
        chain = self._chain(object_id)
        return chain[-1] if chain else None

    def valid_until(self, version: Version) -> Tick:
        return version.valid_until(self.vis[version.object_id])

    def is_superseded(self, version: Version) -> bool:
        chain = self._chain(version.object_id)
        return bool(chain) and chain[-1].seq > version.seq

    def _emit(self, t: Tick, kind: str, object_id: str, detail: dict) -> None:
        if self.trace is not None:
            self.trace({"t": t, "kind": kind, "subject": object_id, "detail": detail})

    # -- operations --------------------------------------------------------

    def install_version(self, object_id: str, value: float, sample_time: Tick,
                        now: Tick | None = None) -> int:
        """Append a new version sampled at `sample_time`; returns its seq.

        `now` is the install completion instant (sample_time plus transmission
        cost); it defaults to sample_time. Sample times must strictly increase
        per object. In classical mode a pinned predecessor triggers restart
        notification before the follow-up sweep reclaims whatever is unpinned.
        """
        if now is None:
            now = sample_time
        chain = self._chain(object_id)
        stats = self.stats[object_id]
        if chain and chain[-1].sample_time >= sample_time:
            raise SimInternalError(
                f"non-monotone install on {object_id!r}: "
                f"{sample_time} after {chain[-1].sample_time}")
        prev = chain[-1] if chain else None
        seq = prev.seq + 1 if prev else 1
        version = Version(object_id=object_id, value=value,
                          sample_time=sample_time, seq=seq)
        chain.append(version)
        stats.live_versions += 1
        self._emit(now, "install", object_id,
                   {"seq": seq, "value": value, "sample_time": sample_time})
        if (self.mode is FreshnessMode.CLASSICAL and prev is not None
                and prev.pin_count > 0 and self.on_superseded_pinned is not None):
            self.on_superseded_pinned(prev)
        self.gc(now)
        # the peak statistic is sampled between events, after the piggybacked
        # sweep, so it reflects versions that actually coexist
        stats.peak_live_versions = max(stats.peak_live_versions, stats.live_versions)
        return seq

    def read_latest(self, object_id: str, t: Tick,
                    exclude_seqs: frozenset[int] | set[int] = frozenset()) -> ReadResult | None:
        """Serve and pin the newest version if it is fresh at t.

        Returns None when the chain is empty, the newest version is stale at
        t, or the caller has excluded it (a transaction never re-pins a
        version whose expiry already restarted it). The caller decides what
        stale means for it: refresh on demand, wait, or go to the source.
        """
        chain = self._chain(object_id)
        if not chain:
            return None
        version = chain[-1]
        if version.seq in exclude_seqs:
            return None
        if not is_fresh(version, self.vis[object_id], t):
            return None
        version.pin_count += 1
        stats = self.stats[object_id]
        stats.active_pins += 1
        stats.peak_active_pins = max(stats.peak_active_pins, stats.active_pins)
        self._emit(t, "read", object_id,
                   {"seq": version.seq, "sample_time": version.sample_time,
                    "staleness": t - version.sample_time})
        return ReadResult(version=version, access_time=t, fresh_at_access=True)

    def may_continue(self, version: Version, access_time: Tick, now: Tick) -> bool:
        """Decide whether a transaction holding `version` keeps going at `now`.

        Multiversion: always, because the version was fresh when accessed and
        that is the consistency point. Classical: only while the version has
        not been replaced and its validity extends strictly past `now`; at the
        expiry instant itself the remaining work can no longer finish on fresh
        data, so the holder restarts.
        """
        if self.mode is FreshnessMode.MULTIVERSION:
            return True
        if self.is_superseded(version):
            return False
        return now < self.valid_until(version)

    def extend_validity(self, object_id: str, ticks: Tick) -> None:
        """Stretch the newest version's effective validity, used when an
        update instance is skipped: the skip confirms the stored value."""
        version = self.newest(object_id)
        if version is None:
            raise SimInternalError(f"validity extension on empty chain {object_id!r}")
        version.vi_extend += ticks

    def unpin(self, object_id: str, seq: int) -> None:
        chain = self._chain(object_id)
        for version in chain:
            if version.seq == seq:
                if version.pin_count <= 0:
                    raise SimInternalError(f"unpin of unpinned {object_id!r}#{seq}")
                version.pin_count -= 1
                self.stats[object_id].active_pins -= 1
                return
        raise SimInternalError(f"unpin of missing {object_id!r}#{seq}")

    def gc(self, now: Tick) -> int:
        """Reclaim every version that is superseded and unpinned; returns the
        count removed. Pinned versions are never touched."""
        reclaimed = 0
        for object_id, chain in self.chains.items():
            if len(chain) <= 1:
                continue
            keep = [v for v in chain[:-1] if v.pin_count > 0]
            removed = [v for v in chain[:-1] if v.pin_count == 0]
            if removed:
                for version in removed:
                    if version.pin_count > 0:
                        raise SimInternalError(
                            f"gc would reclaim pinned {object_id!r}#{version.seq}")
                self.chains[object_id] = keep + [chain[-1]]
                stats = self.stats[object_id]
                stats.live_versions -= len(removed)
                stats.reclaimed += len(removed)
                reclaimed += len(removed)
                self._emit(now, "gc", object_id, {"reclaimed": len(removed)})
        return reclaimed

    def live_version_count(self) -> int:
        return sum(len(c) for c in self.chains.values())
