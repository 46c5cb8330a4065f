"""Check-in ingestion: parsing, filtering, weekly segmentation, samples.

The pipeline is: parse raw lines -> iterate {location filter, user filter,
same-hour merge} to a fixed point -> segment per-user records into weekly
sub-trajectories (local ISO weeks) -> drop thin weeks and thin users ->
rebuild dense catalogs over the survivors -> 80/20 per-user time split ->
per-step prediction samples.

All times downstream of parsing are local: the raw UTC stamp shifted by the
record's timezone offset. Ordering, hour-of-day, and week boundaries all use
that local clock.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple

SCHEMAS = ("foursquare_tsv", "gowalla")

MIN_RECORDS_PER_LOCATION = 10
MIN_RECORDS_PER_USER = 10
MIN_RECORDS_PER_WEEK = 2
MIN_WEEKS_PER_USER = 5
TRAIN_FRACTION = 0.8

_MONTHS = {m: i + 1 for i, m in enumerate(
    ["Jan", "Feb", "Mar", "Apr", "May", "Jun",
     "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"])}


class IngestError(ValueError):
    pass


class MalformedLineError(IngestError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


class RawCheckin(NamedTuple):
    user_id: str
    location_id: str
    category_id: str | None
    category_name: str | None
    latitude: float
    longitude: float
    timestamp_utc: int
    tz_offset_minutes: int


class Record(NamedTuple):
    user_index: int
    location_index: int
    category_index: int | None
    weekday: int          # local, Monday=0
    hour: int             # local
    minute: int           # local
    epoch_s: int          # local clock as seconds since epoch


class SubTrajectory(NamedTuple):
    user_index: int
    week_index: int       # ISO week's Monday, in weeks since epoch
    records: tuple


class Sample(NamedTuple):
    user_index: int
    current_prefix: tuple
    recent: tuple
    target_location: int
    target_category: int | None


class LocationInfo(NamedTuple):
    location_id: str
    latitude: float
    longitude: float
    category_index: int | None


@dataclass
class Catalogs:
    """Dense index spaces for users, locations, and categories."""
    users: list[str]
    locations: list[LocationInfo]
    categories: list[tuple[str, str]] | None   # (category_id, category_name)
    user_index: dict = field(default_factory=dict)
    location_index: dict = field(default_factory=dict)
    category_index: dict = field(default_factory=dict)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.location_index = {l.location_id: i for i, l in enumerate(self.locations)}
        self.category_index = (
            {c[0]: i for i, c in enumerate(self.categories)} if self.categories else {}
        )

    @property
    def has_categories(self) -> bool:
        return self.categories is not None

    @property
    def num_users(self):
        return len(self.users)

    @property
    def num_locations(self):
        return len(self.locations)

    @property
    def num_categories(self):
        return len(self.categories) if self.categories else 0


@dataclass
class DatasetSplit:
    """Per-user ordered sub-trajectories with a train/test boundary."""
    subtrajectories: dict        # user_index -> list[SubTrajectory], time order
    train_counts: dict           # user_index -> number of leading train weeks

    def train_subtrajectories(self):
        for u in sorted(self.subtrajectories):
            for s in self.subtrajectories[u][: self.train_counts[u]]:
                yield s

    def test_subtrajectories(self):
        for u in sorted(self.subtrajectories):
            for s in self.subtrajectories[u][self.train_counts[u]:]:
                yield s

    def user_train_records(self, user_index):
        out = []
        for s in self.subtrajectories[user_index][: self.train_counts[user_index]]:
            out.extend(s.records)
        return out


@dataclass
class Dataset:
    schema: str
    catalogs: Catalogs
    split: DatasetSplit


def _parse_fsq_timestamp(text: str) -> int:
    # e.g. "Tue Apr 03 18:00:09 +0000 2012"; month names parsed explicitly
    # so the host locale cannot change behavior
    parts = text.split()
    if len(parts) != 6:
        raise ValueError(f"bad timestamp {text!r}")
    _, mon, day, clock, zone, year = parts
    if mon not in _MONTHS:
        raise ValueError(f"bad month {mon!r}")
    hh, mm, ss = clock.split(":")
    dt = datetime(int(year), _MONTHS[mon], int(day), int(hh), int(mm), int(ss),
                  tzinfo=timezone.utc)
    if len(zone) != 5 or zone[0] not in "+-" or not zone[1:].isdigit():
        raise ValueError(f"bad zone {zone!r}")
    sign = -1 if zone[0] == "-" else 1
    zone_minutes = sign * (int(zone[1:3]) * 60 + int(zone[3:5]))
    return int(dt.timestamp()) - zone_minutes * 60


def _parse_iso_utc(text: str) -> int:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _checkin_from_foursquare(fields, path, line_no) -> RawCheckin:
    if len(fields) != 8:
        raise MalformedLineError(path, line_no, f"expected 8 tab-separated fields, got {len(fields)}")
    user, venue, cat_id, cat_name, lat, lon, offset, stamp = fields
    try:
        latitude, longitude = float(lat), float(lon)
        tz = int(offset)
        ts = _parse_fsq_timestamp(stamp)
    except ValueError as exc:
        raise MalformedLineError(path, line_no, str(exc)) from exc
    _validate_coords(latitude, longitude, path, line_no)
    cid = cat_id or None
    cname = cat_name or None
    if (cid is None) != (cname is None):
        raise MalformedLineError(path, line_no, "category id/name must both be present or both absent")
    return RawCheckin(user, venue, cid, cname, latitude, longitude, ts, tz)


def _checkin_from_gowalla(fields, path, line_no) -> RawCheckin:
    if len(fields) != 5:
        raise MalformedLineError(path, line_no, f"expected 5 tab-separated fields, got {len(fields)}")
    user, stamp, lat, lon, loc = fields
    try:
        latitude, longitude = float(lat), float(lon)
        ts = _parse_iso_utc(stamp)
    except ValueError as exc:
        raise MalformedLineError(path, line_no, str(exc)) from exc
    _validate_coords(latitude, longitude, path, line_no)
    return RawCheckin(user, loc, None, None, latitude, longitude, ts, 0)


def _validate_coords(lat, lon, path, line_no):
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise MalformedLineError(path, line_no, f"latitude {lat} out of range")
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise MalformedLineError(path, line_no, f"longitude {lon} out of range")


def parse_checkins(path, schema: str, skip_malformed: bool = False):
    """Parse a raw check-in file. Returns (checkins, skipped_line_count)."""
    if schema not in SCHEMAS:
        raise IngestError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    builder = _checkin_from_foursquare if schema == "foursquare_tsv" else _checkin_from_gowalla
    out = []
    skipped = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            try:
                out.append(builder(line.split("\t"), path, line_no))
            except MalformedLineError:
                if not skip_malformed:
                    raise
                skipped += 1
    return out, skipped


def _local_fields(checkin: RawCheckin):
    local_epoch = checkin.timestamp_utc + 60 * checkin.tz_offset_minutes
    dt = datetime.fromtimestamp(local_epoch, tz=timezone.utc)
    return local_epoch, dt


class _Row(NamedTuple):
    checkin: RawCheckin
    local_epoch: int
    date_key: tuple       # (year, month, day, hour) local
    week_index: int
    weekday: int
    hour: int
    minute: int


def _make_row(c: RawCheckin) -> _Row:
    local_epoch, dt = _local_fields(c)
    iso = dt.isocalendar()
    monday_ordinal = dt.toordinal() - (iso.weekday - 1)
    return _Row(
        checkin=c,
        local_epoch=local_epoch,
        date_key=(dt.year, dt.month, dt.day, dt.hour),
        week_index=(monday_ordinal - 1) // 7,
        weekday=dt.weekday(),
        hour=dt.hour,
        minute=dt.minute,
    )


def filter_and_merge(raw: list[RawCheckin]):
    """Apply popularity filters and the same-hour merge until a fixed point.

    One pass removes records at locations with fewer than 10 records, then
    records of users with fewer than 10 records, then merges consecutive
    same-user same-location records within one local calendar hour (keeping
    the earliest). Removal can re-trigger removal, so passes repeat until
    nothing changes. Returns (records, catalogs) with dense indices over the
    survivors.
    """
    if not raw:
        raise IngestError("no check-ins to filter")
    with_cat = sum(1 for c in raw if c.category_id is not None)
    if 0 < with_cat < len(raw):
        raise IngestError(
            f"mixed category presence: {with_cat} of {len(raw)} records carry categories"
        )
    rows = [_make_row(c) for c in raw]
    rows.sort(key=lambda r: (r.checkin.user_id, r.local_epoch, r.checkin.location_id))

    while True:
        before = len(rows)
        loc_counts = {}
        for r in rows:
            loc_counts[r.checkin.location_id] = loc_counts.get(r.checkin.location_id, 0) + 1
        rows = [r for r in rows if loc_counts[r.checkin.location_id] >= MIN_RECORDS_PER_LOCATION]

        user_counts = {}
        for r in rows:
            user_counts[r.checkin.user_id] = user_counts.get(r.checkin.user_id, 0) + 1
        rows = [r for r in rows if user_counts[r.checkin.user_id] >= MIN_RECORDS_PER_USER]

        merged = []
        for r in rows:
            prev = merged[-1] if merged else None
            if (
                prev is not None
                and prev.checkin.user_id == r.checkin.user_id
                and prev.checkin.location_id == r.checkin.location_id
                and prev.date_key == r.date_key
            ):
                continue
            merged.append(r)
        rows = merged
        if len(rows) == before:
            break

    if not rows:
        raise IngestError("all records were filtered out")
    return _index_rows(rows)


def _index_rows(rows):
    """Build dense catalogs (sorted by opaque id) and emit Records."""
    users = sorted({r.checkin.user_id for r in rows})
    loc_first = {}
    for r in sorted(rows, key=lambda r: (r.local_epoch, r.checkin.user_id)):
        loc_first.setdefault(r.checkin.location_id, r.checkin)
    has_categories = next(iter(loc_first.values())).category_id is not None

    categories = None
    cat_index = {}
    if has_categories:
        cat_names = {}
        for r in rows:
            cat_names.setdefault(r.checkin.category_id, r.checkin.category_name)
        categories = [(cid, cat_names[cid]) for cid in sorted(cat_names)]
        cat_index = {cid: i for i, (cid, _) in enumerate(categories)}

    locations = []
    for loc_id in sorted(loc_first):
        c = loc_first[loc_id]
        locations.append(LocationInfo(
            loc_id, c.latitude, c.longitude,
            cat_index[c.category_id] if has_categories else None,
        ))
    catalogs = Catalogs(users=users, locations=locations, categories=categories)

    records = []
    for r in rows:
        c = r.checkin
        records.append(Record(
            user_index=catalogs.user_index[c.user_id],
            location_index=catalogs.location_index[c.location_id],
            category_index=cat_index[c.category_id] if has_categories else None,
            weekday=r.weekday,
            hour=r.hour,
            minute=r.minute,
            epoch_s=r.local_epoch,
        ))
    records.sort(key=lambda rec: (rec.user_index, rec.epoch_s, rec.location_index))
    return records, catalogs


def week_index_of(record: Record) -> int:
    dt = datetime.fromtimestamp(record.epoch_s, tz=timezone.utc)
    iso = dt.isocalendar()
    monday_ordinal = dt.toordinal() - (iso.weekday - 1)
    return (monday_ordinal - 1) // 7


def segment_weeks(records: list[Record]):
    """Split per-user records into ISO-week sub-trajectories.

    Weeks with fewer than 2 records are dropped, then users with fewer than
    5 surviving weeks are dropped. Week indices keep their calendar value;
    gap weeks simply do not appear.
    """
    by_user_week = {}
    for rec in records:
        by_user_week.setdefault((rec.user_index, week_index_of(rec)), []).append(rec)

    per_user = {}
    for (user, week), recs in by_user_week.items():
        if len(recs) < MIN_RECORDS_PER_WEEK:
            continue
        recs.sort(key=lambda r: (r.epoch_s, r.location_index))
        per_user.setdefault(user, []).append(SubTrajectory(user, week, tuple(recs)))

    out = []
    for user in sorted(per_user):
        weeks = sorted(per_user[user], key=lambda s: s.week_index)
        if len(weeks) >= MIN_WEEKS_PER_USER:
            out.extend(weeks)
    return out


def reindex_catalogs(subtrajectories, catalogs: Catalogs):
    """Rebuild dense catalogs over the users/locations surviving segmentation."""
    kept_users = sorted({s.user_index for s in subtrajectories})
    kept_locs = sorted({r.location_index for s in subtrajectories for r in s.records})

    users = [catalogs.users[u] for u in kept_users]
    old_locs = [catalogs.locations[l] for l in kept_locs]

    if catalogs.has_categories:
        kept_cat_ids = sorted(
            {catalogs.categories[r.category_index][0]
             for s in subtrajectories for r in s.records}
            | {catalogs.categories[loc.category_index][0]
               for loc in old_locs if loc.category_index is not None}
        )
        cat_name = dict(catalogs.categories)
        categories = [(cid, cat_name[cid]) for cid in kept_cat_ids]
        new_cat = {cid: i for i, (cid, _) in enumerate(categories)}
        remap_cat = {
            old: new_cat[cid] for old, (cid, _) in enumerate(catalogs.categories)
            if cid in new_cat
        }
    else:
        categories = None
        remap_cat = {}

    locations = [
        LocationInfo(loc.location_id, loc.latitude, loc.longitude,
                     remap_cat[loc.category_index] if loc.category_index is not None else None)
        for loc in old_locs
    ]
    new_cats = Catalogs(users=users, locations=locations, categories=categories)
    user_map = {old: new for new, old in enumerate(kept_users)}
    loc_map = {old: new for new, old in enumerate(kept_locs)}

    remapped = []
    for s in subtrajectories:
        recs = tuple(
            Record(user_map[r.user_index], loc_map[r.location_index],
                   remap_cat[r.category_index] if r.category_index is not None else None,
                   r.weekday, r.hour, r.minute, r.epoch_s)
            for r in s.records
        )
        remapped.append(SubTrajectory(user_map[s.user_index], s.week_index, recs))
    return remapped, new_cats


def split_train_test(subtrajectories) -> DatasetSplit:
    """First floor(0.8*n) weeks of each user to train, remainder to test."""
    per_user = {}
    for s in subtrajectories:
        per_user.setdefault(s.user_index, []).append(s)
    train_counts = {}
    for user, weeks in per_user.items():
        weeks.sort(key=lambda s: s.week_index)
        n = len(weeks)
        k = int(math.floor(TRAIN_FRACTION * n))
        if k >= n:
            k = n - 1
        train_counts[user] = k
    return DatasetSplit(subtrajectories=per_user, train_counts=train_counts)


def build_samples(split: DatasetSplit, recent_weeks: int = 2):
    """Per-step samples: one per (sub-trajectory, prefix position).

    A sub-trajectory at ordinal p (0-based) yields samples only when p >=
    recent_weeks so the recent window exists by ordinal; the recent
    trajectory is the concatenation of the previous recent_weeks
    sub-trajectories, skipping over calendar gaps.
    """
    if recent_weeks < 1:
        raise IngestError("recent_weeks must be >= 1")
    train, test = [], []
    for user in sorted(split.subtrajectories):
        weeks = split.subtrajectories[user]
        n_train = split.train_counts[user]
        for p, sub in enumerate(weeks):
            if p < recent_weeks:
                continue
            recent = tuple(
                r for s in weeks[p - recent_weeks: p] for r in s.records
            )
            recs = sub.records
            bucket = test if p >= n_train else train
            for m in range(1, len(recs)):
                bucket.append(Sample(
                    user_index=user,
                    current_prefix=recs[:m],
                    recent=recent,
                    target_location=recs[m].location_index,
                    target_category=recs[m].category_index,
                ))
    return train, test


def preprocess(path, schema: str, skip_malformed: bool = False):
    """Full ingestion pipeline from a raw file to a Dataset.

    Returns (dataset, info) where info carries the skipped-line count.
    """
    raw, skipped = parse_checkins(path, schema, skip_malformed=skip_malformed)
    records, catalogs = filter_and_merge(raw)
    subtrajs = segment_weeks(records)
    if not subtrajs:
        raise IngestError("no sub-trajectories survived segmentation")
    subtrajs, catalogs = reindex_catalogs(subtrajs, catalogs)
    split = split_train_test(subtrajs)
    return Dataset(schema=schema, catalogs=catalogs, split=split), {"skipped_lines": skipped}


# ---------------------------------------------------------------------------
# dataset serialization: normalized records + catalogs + manifest
# ---------------------------------------------------------------------------

RECORD_COLUMNS = ["user", "week", "pos", "loc", "cat",
                  "weekday", "hour", "minute", "epoch_s", "split"]


def dataset_counts(dataset: Dataset, recent_weeks: int = 2) -> dict:
    split = dataset.split
    n_sub = sum(len(v) for v in split.subtrajectories.values())
    n_train_sub = sum(split.train_counts.values())
    n_records = sum(len(s.records) for v in split.subtrajectories.values() for s in v)
    train_samples, test_samples = build_samples(split, recent_weeks=recent_weeks)
    return {
        "users": dataset.catalogs.num_users,
        "locations": dataset.catalogs.num_locations,
        "categories": dataset.catalogs.num_categories,
        "records": n_records,
        "subtrajectories": n_sub,
        "train_subtrajectories": n_train_sub,
        "test_subtrajectories": n_sub - n_train_sub,
        "train_samples": len(train_samples),
        "test_samples": len(test_samples),
    }


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_dataset(dataset: Dataset, out_dir, recent_weeks: int = 2) -> dict:
    """Write records.tsv, catalog tables, and manifest.json; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    split = dataset.split
    cats = dataset.catalogs

    rec_path = os.path.join(out_dir, "records.tsv")
    with open(rec_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(RECORD_COLUMNS) + "\n")
        for user in sorted(split.subtrajectories):
            weeks = split.subtrajectories[user]
            for p, sub in enumerate(weeks):
                side = "train" if p < split.train_counts[user] else "test"
                for pos, r in enumerate(sub.records):
                    cat = r.category_index if r.category_index is not None else -1
                    fh.write(f"{r.user_index}\t{sub.week_index}\t{pos}\t{r.location_index}"
                             f"\t{cat}\t{r.weekday}\t{r.hour}\t{r.minute}\t{r.epoch_s}\t{side}\n")

    with open(os.path.join(out_dir, "users.tsv"), "w", encoding="utf-8") as fh:
        fh.write("index\tuser_id\n")
        for i, u in enumerate(cats.users):
            fh.write(f"{i}\t{u}\n")

    with open(os.path.join(out_dir, "locations.tsv"), "w", encoding="utf-8") as fh:
        fh.write("index\tlocation_id\tlatitude\tlongitude\tcategory\n")
        for i, loc in enumerate(cats.locations):
            ci = loc.category_index if loc.category_index is not None else -1
            fh.write(f"{i}\t{loc.location_id}\t{loc.latitude!r}\t{loc.longitude!r}\t{ci}\n")

    if cats.has_categories:
        with open(os.path.join(out_dir, "categories.tsv"), "w", encoding="utf-8") as fh:
            fh.write("index\tcategory_id\tcategory_name\n")
            for i, (cid, cname) in enumerate(cats.categories):
                fh.write(f"{i}\t{cid}\t{cname}\n")

    manifest = {
        "kind": "dataset",
        "schema": dataset.schema,
        "has_categories": cats.has_categories,
        "counts": dataset_counts(dataset, recent_weeks=recent_weeks),
        "files": {
            "records": "records.tsv",
            "users": "users.tsv",
            "locations": "locations.tsv",
            **({"categories": "categories.tsv"} if cats.has_categories else {}),
        },
        "content_hash": _file_sha256(rec_path),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(data_dir) -> Dataset:
    """Rebuild a Dataset from a directory written by write_dataset."""
    man_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(man_path):
        raise IngestError(f"{data_dir}: no manifest.json (run the preprocess step first)")
    with open(man_path, encoding="utf-8") as fh:
        manifest = json.load(fh)

    users = []
    with open(os.path.join(data_dir, "users.tsv"), encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            _, uid = line.rstrip("\n").split("\t")
            users.append(uid)

    locations = []
    with open(os.path.join(data_dir, "locations.tsv"), encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            _, lid, lat, lon, cat = line.rstrip("\n").split("\t")
            ci = int(cat)
            locations.append(LocationInfo(lid, float(lat), float(lon),
                                          None if ci < 0 else ci))

    categories = None
    if manifest["has_categories"]:
        categories = []
        with open(os.path.join(data_dir, "categories.tsv"), encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                _, cid, cname = line.rstrip("\n").split("\t", 2)
                categories.append((cid, cname))

    catalogs = Catalogs(users=users, locations=locations, categories=categories)

    groups = {}
    splits = {}
    with open(os.path.join(data_dir, "records.tsv"), encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            u, w, pos, loc, cat, wd, hr, mi, ep, side = line.rstrip("\n").split("\t")
            key = (int(u), int(w))
            ci = int(cat)
            groups.setdefault(key, []).append((int(pos), Record(
                int(u), int(loc), None if ci < 0 else ci,
                int(wd), int(hr), int(mi), int(ep))))
            splits[key] = side

    per_user = {}
    for (u, w), items in groups.items():
        items.sort()
        per_user.setdefault(u, []).append(
            SubTrajectory(u, w, tuple(r for _, r in items)))
    train_counts = {}
    for u, weeks in per_user.items():
        weeks.sort(key=lambda s: s.week_index)
        train_counts[u] = sum(1 for s in weeks if splits[(u, s.week_index)] == "train")
    split = DatasetSplit(subtrajectories=per_user, train_counts=train_counts)
    return Dataset(schema=manifest["schema"], catalogs=catalogs, split=split)
