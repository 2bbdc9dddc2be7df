"""Build the 0.5-degree country lookup grid from a populated-places table.

Each place is snapped to its nearest 0.5-degree grid point; a grid point
takes the country with the most places (ties by code). Grid points without
any place (oceans, empty land) are left out and handled by the nearest-cell
fallback at lookup time.

The shipped grid was built from ``rg_cities1000.csv`` of the
``reverse_geocoder`` package (GeoNames cities1000, CC BY 4.0):

    python tools/build_country_grid.py rg_cities1000.csv \
        src/diagcohort/resources/country_grid.csv
"""

import argparse
import csv
from collections import Counter, defaultdict


def snap(x: float) -> float:
    return round(x * 2) / 2


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("places", help="CSV with lat, lon and cc columns")
    parser.add_argument("out", help="output country_grid.csv")
    args = parser.parse_args()

    cells: dict[tuple[float, float], Counter] = defaultdict(Counter)
    with open(args.places, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            lat, lon = snap(float(row["lat"])), snap(float(row["lon"]))
            if lon == 180.0:
                lon = -180.0
            cc = row["cc"].strip().upper()
            if len(cc) == 2 and cc.isalpha():
                cells[(lat, lon)][cc] += 1

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lat", "lon", "iso2"])
        for (lat, lon), counts in sorted(cells.items()):
            best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            writer.writerow([lat, lon, best])
    print(f"{len(cells)} cells -> {args.out}")


if __name__ == "__main__":
    main()
