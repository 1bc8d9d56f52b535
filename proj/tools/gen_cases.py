#!/usr/bin/env python3
"""Deterministic generator for the bundled MATPOWER case files.

case9 is written from its canonical published values. The larger cases are
synthetic replicas that reproduce the (bus, branch, generator) counts of the
corresponding MATPOWER networks: a low-diameter spanning tree plus chord
branches, one generator per generator bus, a single reference bus, and
electrically plausible parameters with generous limits so the instances are
well inside the solvable regime. Every value is produced by a fixed-seed
generator, so regenerating the files is reproducible bit for bit.
"""

import random
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "data")

CASE9 = """function mpc = case9
mpc.version = '2';
mpc.baseMVA = 100;

%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm	Va	baseKV	zone	Vmax	Vmin
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	2	0	0	0	0	1	1	0	345	1	1.1	0.9;
	3	2	0	0	0	0	1	1	0	345	1	1.1	0.9;
	4	1	0	0	0	0	1	1	0	345	1	1.1	0.9;
	5	1	90	30	0	0	1	1	0	345	1	1.1	0.9;
	6	1	0	0	0	0	1	1	0	345	1	1.1	0.9;
	7	1	100	35	0	0	1	1	0	345	1	1.1	0.9;
	8	1	0	0	0	0	1	1	0	345	1	1.1	0.9;
	9	1	125	50	0	0	1	1	0	345	1	1.1	0.9;
];

%% generator data
%	bus	Pg	Qg	Qmax	Qmin	Vg	mBase	status	Pmax	Pmin
mpc.gen = [
	1	72.3	27.03	300	-300	1.04	100	1	250	10;
	2	163	6.54	300	-300	1.025	100	1	300	10;
	3	85	-10.95	300	-300	1.025	100	1	270	10;
];

%% branch data
%	fbus	tbus	r	x	b	rateA	rateB	rateC	ratio	angle	status	angmin	angmax
mpc.branch = [
	1	4	0	0.0576	0	250	250	250	0	0	1	-360	360;
	4	5	0.017	0.092	0.158	250	250	250	0	0	1	-360	360;
	5	6	0.039	0.17	0.358	150	150	150	0	0	1	-360	360;
	3	6	0	0.0586	0	300	300	300	0	0	1	-360	360;
	6	7	0.0119	0.1008	0.209	150	150	150	0	0	1	-360	360;
	7	8	0.0085	0.072	0.149	250	250	250	0	0	1	-360	360;
	8	2	0	0.0625	0	250	250	250	0	0	1	-360	360;
	8	9	0.032	0.161	0.306	250	250	250	0	0	1	-360	360;
	9	4	0.01	0.085	0.176	250	250	250	0	0	1	-360	360;
];

%% generator cost data
%	2	startup	shutdown	n	c(n-1)	...	c0
mpc.gencost = [
	2	1500	0	3	0.11	5	150;
	2	2000	0	3	0.085	1.2	600;
	2	3000	0	3	0.1225	1	335;
];
"""


def gen_case(name, nbus, nbranch, ngen, seed):
    rng = random.Random(seed)
    lines = [f"function mpc = {name}", "mpc.version = '2';", "mpc.baseMVA = 100;", ""]

    # generators spread over distinct buses; bus 1 is the reference
    gen_buses = [1]
    stride = nbus / ngen
    for g in range(1, ngen):
        b = int(round(1 + g * stride))
        while b in gen_buses or b > nbus:
            b = rng.randrange(2, nbus + 1)
        gen_buses.append(b)
    gen_bus_set = set(gen_buses)

    # sizing: per-generator capacity and total load at roughly 45% of capacity
    pmax = [round(rng.uniform(100.0, 400.0), 1) for _ in range(ngen)]
    cap = sum(pmax)
    nload = nbus - ngen
    target_load = 0.30 * cap
    loads = {}
    for b in range(1, nbus + 1):
        if b in gen_bus_set:
            continue
        loads[b] = rng.uniform(0.5, 1.5)
    scale = target_load / max(1e-9, sum(loads.values()))
    for b in loads:
        loads[b] = round(loads[b] * scale, 2)

    lines.append("%% bus data")
    lines.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    lines.append("mpc.bus = [")
    for b in range(1, nbus + 1):
        if b == 1:
            btype = 3
        elif b in gen_bus_set:
            btype = 2
        else:
            btype = 1
        pd = loads.get(b, 0.0)
        qd = round(pd * rng.uniform(0.15, 0.30), 2)
        bs = 0.0
        lines.append(
            f"\t{b}\t{btype}\t{pd}\t{qd}\t0\t{bs}\t1\t1\t0\t138\t1\t1.1\t0.9;"
        )
    lines.append("];")
    lines.append("")

    lines.append("%% generator data")
    lines.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin")
    lines.append("mpc.gen = [")
    for g in range(ngen):
        p0 = round(0.45 * pmax[g], 1)
        qlim = round(0.8 * pmax[g], 1)
        lines.append(
            f"\t{gen_buses[g]}\t{p0}\t0\t{qlim}\t{-qlim}\t1.02\t100\t1\t{pmax[g]}\t0;"
        )
    lines.append("];")
    lines.append("")

    # spanning tree with low diameter, then chords between nearby buses
    edges = []
    seen = set()
    for b in range(2, nbus + 1):
        parent = max(1, b // 2)
        edges.append((parent, b))
        seen.add((min(parent, b), max(parent, b)))
    while len(edges) < nbranch:
        a = rng.randrange(1, nbus + 1)
        off = rng.randrange(2, 12)
        c = a + off if a + off <= nbus else a - off
        if c < 1 or c == a:
            continue
        key = (min(a, c), max(a, c))
        if key in seen:
            continue
        seen.add(key)
        edges.append((a, c))

    lines.append("%% branch data")
    lines.append(
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
    )
    lines.append("mpc.branch = [")
    for (a, c) in edges:
        x = round(rng.uniform(0.015, 0.08), 4)
        r = round(x * rng.uniform(0.05, 0.2), 4)
        ch = round(rng.uniform(0.0, 0.04), 4)
        rate = int(rng.uniform(600, 1200))
        lines.append(f"\t{a}\t{c}\t{r}\t{x}\t{ch}\t{rate}\t{rate}\t{rate}\t0\t0\t1\t-360\t360;")
    lines.append("];")
    lines.append("")

    lines.append("%% generator cost data")
    lines.append("%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0")
    lines.append("mpc.gencost = [")
    for g in range(ngen):
        c2 = round(rng.uniform(0.002, 0.03), 4)
        c1 = round(rng.uniform(8.0, 40.0), 2)
        lines.append(f"\t2\t0\t0\t3\t{c2}\t{c1}\t0;")
    lines.append("];")
    return "\n".join(lines) + "\n"


def main():
    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "case9.m"), "w") as f:
        f.write(CASE9)
    specs = [
        ("case118", 118, 186, 54, 118),
        ("case1354pegase", 1354, 1991, 260, 1354),
        ("case2869pegase", 2869, 4582, 510, 2869),
        ("case9241pegase", 9241, 16049, 1445, 9241),
    ]
    for name, nbus, nbranch, ngen, seed in specs:
        with open(os.path.join(OUT, f"{name}.m"), "w") as f:
            f.write(gen_case(name, nbus, nbranch, ngen, seed))
        print(f"wrote {name}.m ({nbus} buses, {nbranch} branches, {ngen} gens)")


if __name__ == "__main__":
    main()
