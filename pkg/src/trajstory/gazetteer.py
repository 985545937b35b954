"""Resolve place names to coordinates: fixture store, journal cache, remote API.

Lookup order is cache, then fixture, then remote; the first hit wins and
remote hits are appended to the cache journal. Under ``offline_only`` the
remote leg is never taken, which makes every lookup a pure function of two
files -- the property the deterministic tests lean on.

The fixture is a UTF-8 CSV with columns name, aliases, lon, lat, category,
blurb; aliases are separated by ``|``. The cache is a JSON-lines journal,
append-only so concurrent writers cannot corrupt each other; on load the
last entry per key wins.
"""

from __future__ import annotations

import csv
import json
import os
import threading
import time
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

from .errors import InfrastructureError, ProtocolError
from .geo import BoundingBox, GeoPoint, haversine_distance, meters_per_degree

FetchFn = Callable[[str, dict], object]


def default_fixture_path() -> str:
    """The Porto fixture shipped with the package."""
    return os.path.join(os.path.dirname(__file__), "data", "porto_pois.csv")


def normalize_name(name: str) -> str:
    """Matching key: case-folded, trimmed, diacritics stripped, spaces collapsed."""
    decomposed = unicodedata.normalize("NFD", name)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.casefold().split())


@dataclass(frozen=True)
class POI:
    """A named place. ``source`` records which lookup leg produced it."""

    name: str
    location: GeoPoint
    category: str | None = None
    source: str = "fixture"     # fixture | cache | remote
    blurb: str | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("POI name must be non-empty")


@dataclass
class GazetteerConfig:
    base_url: str = "https://nominatim.openstreetmap.org"
    region_bias: BoundingBox | None = None
    rate_limit: float = 1.0     # remote requests per second
    offline_only: bool = True
    fixture_path: str = field(default_factory=default_fixture_path)
    cache_path: str = ""        # empty disables the journal

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise ValueError(f"rate_limit must be positive, got {self.rate_limit}")
        if self.offline_only and not self.fixture_path:
            raise ValueError("offline_only requires a fixture_path")


def _viewbox_param(b: BoundingBox) -> str:
    return f"{b.min_lon!r},{b.min_lat!r},{b.max_lon!r},{b.max_lat!r}"


def _http_fetch(url: str, params: dict) -> object:
    import requests

    try:
        resp = requests.get(url, params=params,
                            headers={"User-Agent": "trajstory/0.1"}, timeout=20)
        resp.raise_for_status()
    except requests.RequestException as exc:
        raise InfrastructureError(f"gazetteer request failed: {exc}") from exc
    try:
        return resp.json()
    except ValueError as exc:
        raise ProtocolError(f"gazetteer returned non-JSON payload: {exc}") from exc


class Gazetteer:
    """Loaded fixture + cache with an optional remote leg.

    ``fetch`` takes (url, params) and returns the decoded JSON payload;
    tests inject a fake, production uses the requests-based default. Reads
    are safe to share across threads; cache appends are serialized.
    """

    def __init__(self, cfg: GazetteerConfig, fetch: FetchFn | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._fetch = fetch or _http_fetch
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._last_remote: float | None = None
        self._fixture = self._load_fixture(cfg.fixture_path)
        self._cache = self._load_cache(cfg.cache_path)

    # -- stores ------------------------------------------------------------

    @staticmethod
    def _load_fixture(path: str) -> dict[str, POI]:
        index: dict[str, POI] = {}
        if not path:
            return index
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                poi = POI(name=row["name"],
                          location=GeoPoint(float(row["lon"]), float(row["lat"])),
                          category=row.get("category") or None,
                          source="fixture",
                          blurb=row.get("blurb") or None)
                index.setdefault(normalize_name(poi.name), poi)
                for alias in (row.get("aliases") or "").split("|"):
                    if alias.strip():
                        index.setdefault(normalize_name(alias), poi)
        return index

    @staticmethod
    def _load_cache(path: str) -> dict[str, POI]:
        index: dict[str, POI] = {}
        if not path or not os.path.exists(path):
            return index
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    poi = POI(name=entry["name"],
                              location=GeoPoint(entry["lon"], entry["lat"]),
                              category=entry.get("category"),
                              source="cache",
                              blurb=entry.get("blurb"))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    continue    # a torn tail line must not poison the journal
                index[entry["key"]] = poi
        return index

    def fixture_pois(self) -> list[POI]:
        """Distinct fixture entries in file order (aliases collapsed)."""
        out = []
        seen = set()
        for poi in self._fixture.values():
            if id(poi) not in seen:
                seen.add(id(poi))
                out.append(poi)
        return out

    def _cache_key(self, name: str) -> str:
        bias = _viewbox_param(self.cfg.region_bias) if self.cfg.region_bias else "none"
        return f"{normalize_name(name)}|{bias}"

    def _append_cache(self, key: str, poi: POI) -> None:
        with self._lock:
            self._cache[key] = POI(name=poi.name, location=poi.location,
                                   category=poi.category, source="cache", blurb=poi.blurb)
            if self.cfg.cache_path:
                entry = {"key": key, "name": poi.name,
                         "lon": poi.location.lon, "lat": poi.location.lat,
                         "category": poi.category, "blurb": poi.blurb,
                         "ts": datetime.now(timezone.utc).isoformat()}
                with open(self.cfg.cache_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    # -- remote ------------------------------------------------------------

    def _throttle(self) -> None:
        with self._lock:
            now = self._clock()
            if self._last_remote is not None:
                wait = self._last_remote + 1.0 / self.cfg.rate_limit - now
                if wait > 0:
                    self._sleep(wait)
                    now = self._clock()
            self._last_remote = now

    def _search_remote(self, query: str, viewbox: BoundingBox | None, limit: int) -> list[POI]:
        params = {"q": query, "format": "json", "limit": str(limit)}
        if viewbox is not None:
            params["viewbox"] = _viewbox_param(viewbox)
            params["bounded"] = "1"
        self._throttle()
        payload = self._fetch(self.cfg.base_url.rstrip("/") + "/search", params)
        if not isinstance(payload, list):
            raise ProtocolError(f"search payload must be a JSON array, got {type(payload).__name__}")
        results = []
        for item in payload:
            try:
                results.append(POI(name=item["name"],
                                   location=GeoPoint(float(item["lon"]), float(item["lat"])),
                                   category=item.get("category"),
                                   source="remote",
                                   blurb=item.get("blurb")))
            except (TypeError, KeyError, ValueError) as exc:
                raise ProtocolError(f"malformed search result {item!r}: {exc}") from exc
        return results

    # -- lookups -----------------------------------------------------------

    def geocode(self, name: str) -> POI | None:
        """Resolve one name; None when it is unknown everywhere."""
        if not name or not name.strip():
            raise ValueError("cannot geocode an empty name")
        key = self._cache_key(name)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        hit = self._fixture.get(normalize_name(name))
        if hit is not None:
            return hit
        if self.cfg.offline_only:
            return None
        results = self._search_remote(name.strip(), self.cfg.region_bias, limit=1)
        if not results:
            return None
        self._append_cache(key, results[0])
        return results[0]

    def pois_near(self, center: GeoPoint, radius_m: float) -> list[POI]:
        """All known POIs within ``radius_m``, distance ascending, name on ties."""
        if radius_m < 0:
            raise ValueError(f"radius_m must be >= 0, got {radius_m}")
        pool: dict[str, POI] = {}
        for poi in self._cache.values():
            pool.setdefault(normalize_name(poi.name), poi)
        for poi in self._fixture.values():
            pool[normalize_name(poi.name)] = poi
        if not self.cfg.offline_only:
            kx, ky = meters_per_degree(center.lat)
            box = BoundingBox(max(-180.0, center.lon - radius_m / kx),
                              max(-90.0, center.lat - radius_m / ky),
                              min(180.0, center.lon + radius_m / kx),
                              min(90.0, center.lat + radius_m / ky))
            for poi in self._search_remote("", box, limit=50):
                pool.setdefault(normalize_name(poi.name), poi)
        hits = [(haversine_distance(center, poi.location), poi) for poi in pool.values()]
        hits = [(d, poi) for d, poi in hits if d <= radius_m]
        hits.sort(key=lambda t: (t[0], t[1].name))
        return [poi for _, poi in hits]

    def bulk_geocode(self, names: list[str]) -> dict[str, POI | None]:
        """Geocode every name; per-name results match individual calls.

        Transport failures do not abort the batch: every name is attempted,
        then a single InfrastructureError summarizing the failed names is
        raised (results for the run are discarded; the caller retries).
        """
        results: dict[str, POI | None] = {}
        failures: list[str] = []
        for name in names:
            if name in results:
                continue
            try:
                results[name] = self.geocode(name)
            except InfrastructureError as exc:
                results[name] = None
                failures.append(f"{name}: {exc}")
        if failures:
            raise InfrastructureError(
                f"bulk geocode: {len(failures)} name(s) failed: " + "; ".join(failures))
        return results


def geocode(name: str, cfg: GazetteerConfig, fetch: FetchFn | None = None) -> POI | None:
    return Gazetteer(cfg, fetch=fetch).geocode(name)


def pois_near(center: GeoPoint, radius_m: float, cfg: GazetteerConfig,
              fetch: FetchFn | None = None) -> list[POI]:
    return Gazetteer(cfg, fetch=fetch).pois_near(center, radius_m)


def bulk_geocode(names: list[str], cfg: GazetteerConfig,
                 fetch: FetchFn | None = None) -> dict[str, POI | None]:
    return Gazetteer(cfg, fetch=fetch).bulk_geocode(names)
