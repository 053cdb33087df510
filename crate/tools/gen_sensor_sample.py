"""Write a one-day, three-sensor voltage sample and its chain config.

The sensors sit down a 230 V feeder. Drops follow a daily load shape with
small measurement noise, one sensor has a 40-minute dropout, one sample is
an outage reading and one row is a duplicate.
"""

import csv
import math
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "data"
START = datetime(2024, 3, 4, tzinfo=timezone.utc)
STEP = timedelta(minutes=2)
N = 720


def load_shape(hour):
    morning = math.exp(-((hour - 7.5) / 1.5) ** 2)
    evening = math.exp(-((hour - 19.5) / 2.0) ** 2)
    return 0.3 + 0.5 * morning + 0.9 * evening


def main():
    rng = random.Random(20240304)
    rows = []
    for k in range(N):
        t = START + k * STEP
        shape = load_shape(k * 2 / 60)
        v_up = 236.0 - 4.0 * shape
        v_mid = v_up * (1 - 0.012 * shape)
        v_down = v_mid * (1 - 0.018 * shape)
        for sensor, v, skew in (("s1", v_up, 0), ("s2", v_mid, 7), ("s3", v_down, -11)):
            if sensor == "s2" and 300 <= k < 320:
                continue
            volts = v + rng.gauss(0, 0.15)
            if sensor == "s3" and k == 500:
                volts = 4.2
            stamp = (t + timedelta(seconds=skew)).strftime("%Y-%m-%dT%H:%M:%SZ")
            rows.append((sensor, stamp, f"{volts:.2f}"))
    rows.append(rows[10])
    rng.shuffle(rows)
    with open(OUT / "sensors_sample.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sensor_id", "timestamp", "voltage_v"])
        w.writerows(rows)
    (OUT / "chain_sample.toml").write_text(
        'sensors = ["s1", "s2", "s3"]\n'
        "nominal_voltage = 230.0\n"
        "# the middle sensor sits about a third of the way down the feeder\n"
        "rho_s = [0.667, 0.5]\n"
        "window_minutes = 10\n"
        "grid_step_seconds = 120\n"
        "tolerance_seconds = 60\n"
    )


if __name__ == "__main__":
    main()
