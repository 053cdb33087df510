#!/usr/bin/env python3
"""Convert the IEEE 13- and 34-node radial test feeder tables into .feeder files.

Run once from the repository root; the output is committed under
crates/core/data/. Impedances are Ohm/mile, lengths in feet.
"""
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")


def full(phases, upper):
    """Expand an upper-triangular {(i,j): (r,x)} table to a dense row-major list."""
    n = len(phases)
    z = [[0.0, 0.0] for _ in range(n * n)]
    for (i, j), (r, x) in upper.items():
        z[i * n + j] = [r, x]
        z[j * n + i] = [r, x]
    return z


def sym3(aa, ab, ac, bb, bc, cc):
    return {(0, 0): aa, (0, 1): ab, (0, 2): ac, (1, 1): bb, (1, 2): bc, (2, 2): cc}


def line(frm, to, ft, cfg, configs):
    phases, z = configs[cfg]
    return {
        "id": f"{frm}-{to}",
        "from": frm,
        "to": to,
        "phases": phases,
        "length": ft,
        "unit": "ft",
        "z": z,
        "kind": {"type": "line"},
    }


def regulator(ident, frm, to, steps):
    return {
        "id": ident,
        "from": frm,
        "to": to,
        "phases": "ABC",
        "kind": {"type": "regulator", "tap": [1.0 + 0.00625 * s for s in steps]},
    }


def transformer(ident, frm, to, kv_high, kv_low, kva, r_pct, x_pct):
    zbase = kv_low ** 2 * 1000.0 / kva
    return {
        "id": ident,
        "from": frm,
        "to": to,
        "phases": "ABC",
        "kind": {
            "type": "transformer",
            "ratio": kv_high / kv_low,
            "series_z": [r_pct / 100.0 * zbase, x_pct / 100.0 * zbase],
        },
    }


def load(ident, conn, model, pq, node=None, segment=None):
    d = {"id": ident}
    if node is not None:
        d["node"] = node
    else:
        d["segment"] = segment
        d["placement"] = "distributed"
    d["connection"] = conn
    d["model"] = model
    d["kw"] = [p for p, _ in pq]
    d["kvar"] = [q for _, q in pq]
    return d


LOAD_CODES = {
    "Y-PQ": ("wye", "pq"),
    "Y-Z": ("wye", "z"),
    "Y-I": ("wye", "i"),
    "D-PQ": ("delta", "pq"),
    "D-Z": ("delta", "z"),
    "D-I": ("delta", "i"),
}


def ieee13():
    configs = {
        "601": ("ABC", full("ABC", sym3((0.3465, 1.0179), (0.1560, 0.5017), (0.1580, 0.4236),
                                       (0.3375, 1.0478), (0.1535, 0.3849), (0.3414, 1.0348)))),
        "602": ("ABC", full("ABC", sym3((0.7526, 1.1814), (0.1580, 0.4236), (0.1560, 0.5017),
                                       (0.7475, 1.1983), (0.1535, 0.3849), (0.7436, 1.2112)))),
        "603": ("BC", full("BC", {(0, 0): (1.3294, 1.3471), (0, 1): (0.2066, 0.4591),
                                  (1, 1): (1.3238, 1.3569)})),
        "604": ("AC", full("AC", {(0, 0): (1.3238, 1.3569), (0, 1): (0.2066, 0.4591),
                                  (1, 1): (1.3294, 1.3471)})),
        "605": ("C", [[1.3292, 1.3475]]),
        "606": ("ABC", full("ABC", sym3((0.7982, 0.4463), (0.3192, 0.0328), (0.2849, -0.0143),
                                       (0.7891, 0.4041), (0.3192, 0.0328), (0.7982, 0.4463)))),
        "607": ("A", [[1.3425, 0.5124]]),
        "switch": ("ABC", [[0.0, 0.0]] * 9),
    }
    segments = [
        regulator("reg", "650", "rg60", [10, 8, 11]),
        line("rg60", "632", 2000, "601", configs),
        line("632", "645", 500, "603", configs),
        line("632", "633", 500, "602", configs),
        transformer("xfm1", "633", "634", 4.16, 0.48, 500.0, 1.1, 2.0),
        line("645", "646", 300, "603", configs),
        line("684", "652", 800, "607", configs),
        line("632", "671", 2000, "601", configs),
        line("671", "684", 300, "604", configs),
        line("671", "680", 1000, "601", configs),
        line("671", "692", 0, "switch", configs),
        line("684", "611", 300, "605", configs),
        line("692", "675", 500, "606", configs),
    ]
    nodes = {
        "650": "ABC", "rg60": "ABC", "632": "ABC", "633": "ABC", "634": "ABC", "645": "BC",
        "646": "BC", "671": "ABC", "680": "ABC", "684": "AC", "611": "C", "652": "A",
        "692": "ABC", "675": "ABC",
    }
    caps = {"675": [200.0, 200.0, 200.0], "611": [0.0, 0.0, 100.0]}
    spot = [
        ("634", "Y-PQ", [(160, 110), (120, 90), (120, 90)]),
        ("645", "Y-PQ", [(0, 0), (170, 125), (0, 0)]),
        ("646", "D-Z", [(0, 0), (230, 132), (0, 0)]),
        ("652", "Y-Z", [(128, 86), (0, 0), (0, 0)]),
        ("671", "D-PQ", [(385, 220), (385, 220), (385, 220)]),
        ("675", "Y-PQ", [(485, 190), (68, 60), (290, 212)]),
        ("692", "D-I", [(0, 0), (0, 0), (170, 151)]),
        ("611", "Y-I", [(0, 0), (0, 0), (170, 80)]),
    ]
    dist = [("632", "671", "Y-PQ", [(17, 10), (66, 38), (117, 68)])]
    loads = [load(f"s{n}", *LOAD_CODES[c], pq, node=n) for n, c, pq in spot]
    loads += [load(f"d{a}-{b}", *LOAD_CODES[c], pq, segment=f"{a}-{b}") for a, b, c, pq in dist]
    return {
        "name": "ieee13",
        "base": {"kva": 5000.0, "kv_ll": 4.16},
        "source": {"node": "650", "kv_ll": 4.16, "pu": [1.0, 1.0, 1.0],
                   "angle_deg": [0.0, -120.0, 120.0]},
        "nodes": [node_entry(n, p, caps) for n, p in nodes.items()],
        "segments": segments,
        "loads": loads,
    }


def ieee34():
    configs = {
        "300": ("ABC", full("ABC", sym3((1.3368, 1.3343), (0.2101, 0.5779), (0.2130, 0.5015),
                                       (1.3238, 1.3569), (0.2066, 0.4591), (1.3294, 1.3471)))),
        "301": ("ABC", full("ABC", sym3((1.9300, 1.4115), (0.2327, 0.6442), (0.2359, 0.5691),
                                       (1.9157, 1.4281), (0.2288, 0.5238), (1.9219, 1.4209)))),
        "302": ("A", [[2.7995, 1.4855]]),
        "303": ("B", [[2.7995, 1.4855]]),
        "304": ("B", [[1.9217, 1.4212]]),
    }
    table = [
        ("800", "802", 2580, "300"), ("802", "806", 1730, "300"), ("806", "808", 32230, "300"),
        ("808", "810", 5804, "303"), ("808", "812", 37500, "300"), ("812", "814", 29730, "300"),
        ("814r", "850", 10, "301"), ("816", "818", 1710, "302"), ("816", "824", 10210, "301"),
        ("818", "820", 48150, "302"), ("820", "822", 13740, "302"), ("824", "826", 3030, "303"),
        ("824", "828", 840, "301"), ("828", "830", 20440, "301"), ("830", "854", 520, "301"),
        ("832", "858", 4900, "301"), ("834", "860", 2020, "301"), ("834", "842", 280, "301"),
        ("836", "840", 860, "301"), ("836", "862", 280, "301"), ("842", "844", 1350, "301"),
        ("844", "846", 3640, "301"), ("846", "848", 530, "301"), ("850", "816", 310, "301"),
        ("852r", "832", 10, "301"), ("854", "856", 23330, "303"), ("854", "852", 36830, "301"),
        ("858", "864", 1620, "302"), ("858", "834", 5830, "301"), ("860", "836", 2680, "301"),
        ("862", "838", 4860, "304"), ("888", "890", 10560, "300"),
    ]
    segments = [line(a, b, ft, cfg, configs) for a, b, ft, cfg in table]
    segments.insert(6, regulator("reg1", "814", "814r", [12, 5, 5]))
    segments.insert(25, regulator("reg2", "852", "852r", [13, 11, 12]))
    segments.append(transformer("xfm1", "832", "888", 24.9, 4.16, 500.0, 1.9, 4.08))
    single = {"810": "B", "818": "A", "820": "A", "822": "A", "826": "B", "856": "B",
              "864": "A", "838": "B"}
    names = ["800", "802", "806", "808", "810", "812", "814", "814r", "850", "816", "818",
             "820", "822", "824", "826", "828", "830", "854", "856", "852", "852r", "832",
             "858", "864", "834", "842", "844", "846", "848", "860", "836", "840", "862",
             "838", "888", "890"]
    caps = {"844": [100.0, 100.0, 100.0], "848": [150.0, 150.0, 150.0]}
    spot = [
        ("860", "Y-PQ", [(20, 16), (20, 16), (20, 16)]),
        ("840", "Y-I", [(9, 7), (9, 7), (9, 7)]),
        ("844", "Y-Z", [(135, 105), (135, 105), (135, 105)]),
        ("848", "D-PQ", [(20, 16), (20, 16), (20, 16)]),
        ("890", "D-I", [(150, 75), (150, 75), (150, 75)]),
        ("830", "D-Z", [(10, 5), (10, 5), (25, 10)]),
    ]
    dist = [
        ("802", "806", "Y-PQ", [(0, 0), (30, 15), (25, 14)]),
        ("808", "810", "Y-I", [(0, 0), (16, 8), (0, 0)]),
        ("818", "820", "Y-Z", [(34, 17), (0, 0), (0, 0)]),
        ("820", "822", "Y-PQ", [(135, 70), (0, 0), (0, 0)]),
        ("816", "824", "D-I", [(0, 0), (5, 2), (0, 0)]),
        ("824", "826", "Y-I", [(0, 0), (40, 20), (0, 0)]),
        ("824", "828", "Y-PQ", [(0, 0), (0, 0), (4, 2)]),
        ("828", "830", "Y-PQ", [(7, 3), (0, 0), (0, 0)]),
        ("854", "856", "Y-PQ", [(0, 0), (4, 2), (0, 0)]),
        ("832", "858", "D-Z", [(7, 3), (2, 1), (6, 3)]),
        ("858", "864", "Y-PQ", [(2, 1), (0, 0), (0, 0)]),
        ("858", "834", "D-PQ", [(4, 2), (15, 8), (13, 7)]),
        ("834", "860", "D-Z", [(16, 8), (20, 10), (110, 55)]),
        ("860", "836", "D-PQ", [(30, 15), (10, 6), (42, 22)]),
        ("836", "840", "D-I", [(18, 9), (22, 11), (0, 0)]),
        ("862", "838", "Y-PQ", [(0, 0), (28, 14), (0, 0)]),
        ("842", "844", "Y-PQ", [(9, 5), (0, 0), (0, 0)]),
        ("844", "846", "Y-PQ", [(0, 0), (25, 12), (20, 11)]),
        ("846", "848", "Y-PQ", [(0, 0), (23, 11), (0, 0)]),
    ]
    loads = [load(f"s{n}", *LOAD_CODES[c], pq, node=n) for n, c, pq in spot]
    loads += [load(f"d{a}-{b}", *LOAD_CODES[c], pq, segment=f"{a}-{b}") for a, b, c, pq in dist]
    return {
        "name": "ieee34",
        "base": {"kva": 2500.0, "kv_ll": 24.9},
        "source": {"node": "800", "kv_ll": 24.9, "pu": [1.05, 1.05, 1.05],
                   "angle_deg": [0.0, -120.0, 120.0]},
        "nodes": [node_entry(n, single.get(n, "ABC"), caps) for n in names],
        "segments": segments,
        "loads": loads,
    }


def node_entry(node, phases, caps):
    d = {"id": node, "phases": phases}
    if node in caps:
        d["capacitor_kvar"] = caps[node]
    return d


def main():
    for feeder in (ieee13(), ieee34()):
        path = os.path.join(OUT, feeder["name"] + ".feeder")
        with open(path, "w") as f:
            json.dump(feeder, f, indent=1)
            f.write("\n")
        print("wrote", os.path.normpath(path))


if __name__ == "__main__":
    main()
