"""Regenerate data/toy_checkins.tsv, the bundled 12-user toy corpus.

The corpus is deterministic (seeded) and hand-shaped so the preprocessing
rules all fire somewhere:

  u01..u08  regular users: 10 weeks x 4-5 records at popular locations
  u09       exactly 9 records -> removed by the user filter
  u10       10 records, 7 of them at L20; u09 holds 3 of L20's 10 records,
            so removing u09 starves L20 below 10, which then drops u10 on
            the next pass (multi-pass cascade)
  u11       13 records in 5 weeks, one week has a single record -> that
            week is dropped, leaving 4 sub-trajectories -> user dropped
  u12       regular user with a same-hour duplicate pair (merged) and a
            cross-hour revisit (kept; becomes a self-loop edge)
  L29       visited only in weeks 9-10 of u01..u05 (their test weeks)
            -> catalog location with no training edges (isolated node)

Timestamps are written in UTC with a -240 minute offset column, so local
time is UTC-4h. Week 0 starts Monday 2012-04-02 local.
"""

import os
from datetime import datetime, timedelta, timezone

import numpy as np

SEED = 20240601
TZ_OFFSET_MIN = -240
WEEK0_MONDAY_LOCAL = datetime(2012, 4, 2, tzinfo=timezone.utc)

WEEKDAY_NAMES = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
MONTH_NAMES = ["Jan", "Feb", "Mar", "Apr", "May", "Jun",
               "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]


def location_fields(i):
    return (f"L{i:02d}", f"cat{i % 6}", f"Category {i % 6}",
            40.700 + 0.005 * i, -74.000 - 0.004 * i)


def fmt_timestamp(local_dt):
    utc = local_dt - timedelta(minutes=TZ_OFFSET_MIN)
    return (f"{WEEKDAY_NAMES[utc.weekday()]} {MONTH_NAMES[utc.month - 1]} "
            f"{utc.day:02d} {utc.hour:02d}:{utc.minute:02d}:{utc.second:02d} +0000 {utc.year}")


def line(user, loc_i, week, weekday, hour, minute):
    loc, cat_id, cat_name, lat, lon = location_fields(loc_i)
    local = WEEK0_MONDAY_LOCAL + timedelta(days=7 * week + weekday,
                                           hours=hour, minutes=minute)
    return (f"{user}\t{loc}\t{cat_id}\t{cat_name}\t{lat:.4f}\t{lon:.4f}"
            f"\t{TZ_OFFSET_MIN}\t{fmt_timestamp(local)}")


def weekly_slots(rng, n):
    """n distinct (weekday, hour) slots in one week, time order."""
    picks = rng.choice(7 * 12, size=n, replace=False)  # hours 8..19
    slots = sorted((int(p) // 12, 8 + int(p) % 12) for p in picks)
    return slots


def regular_weeks(rng, user, cores, weeks=range(10), skip=()):
    rows = []
    for w in weeks:
        if w in skip:
            continue
        n = int(rng.integers(4, 6))
        for j, (wd, hr) in enumerate(weekly_slots(rng, n)):
            loc = int(cores[int(rng.integers(0, len(cores)))])
            rows.append(line(user, loc, w, wd, hr, (7 * j + 3) % 60))
    return rows


def main(out_path):
    rng = np.random.default_rng(SEED)
    rows = []

    regulars = [f"u{i:02d}" for i in range(1, 9)]
    for ui, user in enumerate(regulars):
        cores = [ui % 5, (ui + 2) % 10, (ui + 5) % 10, (ui + 7) % 10]
        rows.extend(regular_weeks(rng, user, cores))

    # u09: 9 records total (6 core + 3 at L20), fails the 10-record rule
    for k, (w, wd, hr, loc) in enumerate([
        (0, 0, 9, 1), (0, 2, 11, 2), (1, 1, 10, 3),
        (1, 3, 15, 1), (2, 0, 9, 2), (2, 4, 17, 3),
        (3, 1, 12, 20), (3, 3, 13, 20), (4, 2, 14, 20),
    ]):
        rows.append(line("u09", loc, w, wd, hr, (11 * k) % 60))

    # u10: 10 records, 7 at L20; survives pass 1, falls with L20 on pass 2
    for k, (w, wd, hr, loc) in enumerate([
        (0, 0, 10, 20), (0, 2, 12, 20), (1, 1, 9, 20),
        (1, 3, 14, 20), (2, 0, 11, 20), (2, 4, 16, 20),
        (3, 2, 10, 20), (3, 4, 15, 4), (4, 1, 12, 5), (4, 3, 17, 6),
    ]):
        rows.append(line("u10", loc, w, wd, hr, (13 * k) % 60))

    # u11: 4 full weeks of 3 + week 4 with a single record -> 4 sub-trajectories
    for w in range(4):
        for j, (wd, hr) in enumerate([(0, 9), (2, 13), (4, 18)]):
            rows.append(line("u11", (w + j) % 8, w, wd, hr, (9 * j + 5) % 60))
    rows.append(line("u11", 2, 4, 2, 12, 30))

    # u12: regular, with a designed merge pair and a cross-hour revisit
    rows.append(line("u12", 7, 0, 1, 10, 5))    # kept
    rows.append(line("u12", 7, 0, 1, 10, 40))   # same local hour -> merged away
    rows.append(line("u12", 8, 0, 2, 9, 15))
    rows.append(line("u12", 8, 0, 2, 10, 2))    # same loc, next hour -> self-loop
    rows.append(line("u12", 9, 0, 4, 18, 0))
    rows.append(line("u12", 7, 1, 0, 9, 30))
    rows.append(line("u12", 9, 1, 2, 11, 10))
    rows.append(line("u12", 8, 1, 4, 16, 45))
    rows.extend(regular_weeks(rng, "u12", [7, 8, 9, 0], weeks=range(2, 10)))

    # L29 appears only in weeks 8-9 of u01..u05 (test side for 10-week users)
    for ui, user in enumerate(regulars[:5]):
        rows.append(line(user, 29, 8, 5, 20, ui))
        rows.append(line(user, 29, 9, 6, 20, ui))

    rows.sort()  # stable file order; pipeline must not depend on input order
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} check-ins to {out_path}")


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    main(os.path.join(here, "..", "data", "toy_checkins.tsv"))
