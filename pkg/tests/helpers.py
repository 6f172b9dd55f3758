"""Small builders for UJIIndoorLoc-format CSV text."""

import numpy as np

META = ["SPACEID", "RELATIVEPOSITION", "USERID", "PHONEID", "TIMESTAMP"]


def uji_csv(rows, n_aps=520):
    """``rows``: dicts with optional 'rssi' {ap_index: dBm} and location keys."""
    header = [f"WAP{i + 1:03d}" for i in range(n_aps)] + [
        "LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID"] + META
    lines = [",".join(header)]
    for r in rows:
        vals = ["100"] * n_aps
        for ap, v in r.get("rssi", {}).items():
            vals[ap] = str(v)
        vals += [str(r.get("lon", -7600.5)), str(r.get("lat", 4864900.25)),
                 str(r.get("floor", 0)), str(r.get("building", 0)),
                 str(r.get("space", 101)), str(r.get("relpos", 2)),
                 str(r.get("user", 11)), str(r.get("phone", 13)),
                 str(r.get("ts", 1371713733))]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def random_rows(rng, n, n_aps=8, buildings=(0, 1), floors=(0, 1, 2)):
    rows = []
    for _ in range(n):
        rssi = {j: int(rng.integers(-104, 1)) for j in range(n_aps) if rng.random() < 0.7}
        rows.append({
            "rssi": rssi,
            "lon": round(float(rng.uniform(-7700, -7300)), 4),
            "lat": round(float(rng.uniform(4864700, 4865000)), 4),
            "floor": int(rng.choice(floors)),
            "building": int(rng.choice(buildings)),
            "space": int(rng.integers(100, 120)),
            "relpos": int(rng.integers(1, 3)),
        })
    return rows
