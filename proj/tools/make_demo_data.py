"""Regenerates the small demo region in data/demo (deterministic)."""
import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "demo"
rng = random.Random(2017)

LON0, LAT0 = -1.60, 53.78
DLON, DLAT = 0.03, 0.018
ROWS, COLS = 3, 3

zones = []
for r in range(ROWS):
    for c in range(COLS):
        zid = f"E0200{r * COLS + c + 1:04d}"
        lon, lat = LON0 + c * DLON, LAT0 + r * DLAT
        ring = [[lon, lat], [lon + DLON, lat], [lon + DLON, lat + DLAT], [lon, lat + DLAT], [lon, lat]]
        zones.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {
                "id": zid,
                "name": f"Demo {r * COLS + c + 1:03d}",
                "mortality_area": "DEMO_LA",
                "centroid_lon": round(lon + DLON * rng.uniform(0.35, 0.65), 6),
                "centroid_lat": round(lat + DLAT * rng.uniform(0.35, 0.65), 6),
            },
        })
(OUT / "zones.geojson").write_text(json.dumps({"type": "FeatureCollection", "features": zones}, indent=2) + "\n")

ids = [z["properties"]["id"] for z in zones]
rows = ["origin,dest,all,cycle,walk,car,other,male_all,male_cycle,female_all,female_cycle"]
for o in ids:
    for d in ids:
        if rng.random() < 0.25 and o != d:
            continue
        total = rng.randint(5, 160) if o != d else rng.randint(40, 300)
        cycle = int(total * rng.uniform(0.0, 0.08))
        walk = int((total - cycle) * (rng.uniform(0.2, 0.5) if o == d else rng.uniform(0.0, 0.15)))
        car = int((total - cycle - walk) * rng.uniform(0.5, 0.8))
        other = total - cycle - walk - car
        male_all = int(total * rng.uniform(0.4, 0.6))
        male_cycle = min(male_all, int(round(cycle * rng.uniform(0.6, 0.85))))
        female_all = total - male_all
        female_cycle = cycle - male_cycle
        if female_cycle > female_all:
            female_cycle, male_cycle = female_all, cycle - female_all
        rows.append(f"{o},{d},{total},{cycle},{walk},{car},{other},{male_all},{male_cycle},{female_all},{female_cycle}")
(OUT / "od.csv").write_text("\n".join(rows) + "\n")

bands = [(16, 24), (25, 34), (35, 49), (50, 64), (65, 74)]
base = {"male": [0.0006, 0.0009, 0.0020, 0.0060, 0.0160], "female": [0.0003, 0.0004, 0.0013, 0.0040, 0.0100]}
mort = ["area_id,sex,age_min,age_max,annual_rate"]
for sex, rates in base.items():
    for (lo, hi), rate in zip(bands, rates):
        mort.append(f"DEMO_LA,{sex},{lo},{hi},{rate}")
(OUT / "mortality.csv").write_text("\n".join(mort) + "\n")

profiles = {
    "census": {"male": [0.10, 0.18, 0.25, 0.13, 0.04], "female": [0.05, 0.08, 0.10, 0.05, 0.02]},
    "netherlands": {"male": [0.08, 0.10, 0.15, 0.12, 0.05], "female": [0.08, 0.10, 0.15, 0.12, 0.05]},
}
prof = ["scenario,sex,age_min,age_max,weight"]
for label, by_sex in profiles.items():
    for sex, weights in by_sex.items():
        for (lo, hi), w in zip(bands, weights):
            prof.append(f"{label},{sex},{lo},{hi},{w}")
(OUT / "age_profiles.csv").write_text("\n".join(prof) + "\n")
