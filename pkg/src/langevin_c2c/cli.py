"""Command-line entry point: ``langevin-c2c simulate|mesh-gen|verify``."""

from __future__ import annotations

import argparse
import sys

from . import mesh as meshmod

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_LOST = 2
EXIT_VERIFY = 3


def _simulate(args) -> int:
    from .integrator import LostParticleError
    from .scenarios import ConfigError, load_config, run_scenario

    try:
        cfg = load_config(args.config, mode=args.mode, seed=args.seed, output_dir=args.out,
                          strict=True if args.strict else None, workers=args.workers,
                          plots=False if args.no_plots else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_scenario(cfg)
    except LostParticleError as exc:
        print(f"lost particles: {exc}", file=sys.stderr)
        return EXIT_LOST
    except meshmod.MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.summary())
    return EXIT_OK


def build_mesh(args) -> meshmod.Mesh:
    kind = args.kind
    if kind == "slab":
        return meshmod.build_cartesian_slab(args.n_cells, args.dx, args.transverse)
    if kind == "box":
        return meshmod.build_box(args.n_per_side, args.length, periodic=not args.walls)
    if kind == "perturbed-hexa":
        return meshmod.build_perturbed_hexa(args.n_per_side, args.jitter, args.seed, args.length,
                                            periodic=not args.walls)
    if kind == "tetra-box":
        return meshmod.build_tetra_box(args.n_per_side, args.length, periodic=not args.walls)
    return meshmod.build_annulus(args.n_theta, args.n_r, args.r_in, args.r_out, args.depth)


def _mesh_gen(args) -> int:
    try:
        m = build_mesh(args)
    except meshmod.MeshError as exc:
        print(f"invalid mesh parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meshmod.write_mesh(m, args.out)
    if meshmod.read_mesh(args.out) != m:
        print("round trip through the mesh file changed the mesh", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {args.out}: {m.n_cells} cells, {m.n_faces} faces, {m.n_vertices} vertices")
    return EXIT_OK


def _verify(args) -> int:
    from .verify import verify

    rep = verify(echo=print)
    print("all checks passed" if rep.ok else "verification FAILED")
    return EXIT_OK if rep.ok else EXIT_VERIFY


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="langevin-c2c", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario from an INI config")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=["cell-to-cell", "single", "anticipating"])
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory")
    s.add_argument("--strict", action="store_true", help="abort on the first lost particle")
    s.add_argument("--workers", type=int, help="particle threads")
    s.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    s.set_defaults(func=_simulate)

    g = sub.add_parser("mesh-gen", help="write a generated mesh")
    g.add_argument("--kind", required=True, choices=["slab", "box", "perturbed-hexa", "tetra-box", "annulus"])
    g.add_argument("--out", required=True)
    g.add_argument("--n-cells", type=int, default=4)
    g.add_argument("--dx", type=float, default=1.0)
    g.add_argument("--transverse", type=float, default=1.0)
    g.add_argument("--n-per-side", type=int, default=4)
    g.add_argument("--length", type=float, default=1.0)
    g.add_argument("--jitter", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--walls", action="store_true", help="box sides become walls instead of periodic")
    g.add_argument("--n-theta", type=int, default=360)
    g.add_argument("--n-r", type=int, default=21)
    g.add_argument("--r-in", type=float, default=1.0)
    g.add_argument("--r-out", type=float, default=2.0)
    g.add_argument("--depth", type=float, default=0.05)
    g.set_defaults(func=_mesh_gen)

    v = sub.add_parser("verify", help="run the self-check suite")
    v.set_defaults(func=_verify)
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as a lost particle
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
