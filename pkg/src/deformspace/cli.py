"""Command-line pipeline: stage-by-stage construction of a space bundle.

    deformspace make-demo --out demo --family bump-ellipsoid --landmarks 6
    deformspace project --config demo/space.json --out demo/bundle
    deformspace embed --out demo/bundle
    deformspace geodesics --out demo/bundle
    deformspace train-map --out demo/bundle
    deformspace switchpoints --out demo/bundle
    deformspace energy-report --out demo/bundle
    deformspace deform --out demo/bundle --landmark 0 --path "0,0;0.4,0.2"
    deformspace serve --bundle demo/bundle --port 8008

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import struct
import sys
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from . import pipeline
from .errors import (
    BundleError,
    InvalidInputError,
    NumericalError,
    OutsideDomainError,
    TrainingDivergedError,
)
from .geomcore import write_obj

logger = logging.getLogger("deformspace")


def _load_config(path: Path) -> dict:
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    return json.loads(path.read_text())


def _parse_path(text: str) -> np.ndarray:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = chunk.split(",")
        pts.append([float(x), float(y)])
    return np.array(pts)


def _apply_overrides(config: dict, args) -> dict:
    if args.seed is not None:
        config["seed"] = args.seed
    if getattr(args, "generator", None):
        config["generator"] = _load_config(Path(args.generator))
    for key, value in (args.set or []):
        section, _, name = key.rpartition(".")
        target = config
        if section:
            target = config.setdefault(section, {})
        target[name] = json.loads(value)
    return config


def _load_bundle(args) -> bundle_io.SpaceBundle:
    space = bundle_io.load(args.out)
    if args.seed is not None:
        space.seed = args.seed
    return space


def _save(space, out) -> None:
    path = bundle_io.save(space, out)
    logger.info("bundle written: %s", path)


def cmd_make_demo(args) -> int:
    from .synth import write_demo_space

    gen_config = {
        "family": args.family,
        "latent_dim": args.latent_dim,
        "point_count": args.point_count,
        "seed": args.seed or 0,
    }
    path = write_demo_space(args.out, gen_config, count=args.landmarks,
                            seed=args.seed or 0)
    print(path)
    return 0


def cmd_project(args) -> int:
    config = _apply_overrides(_load_config(Path(args.config)), args)
    space = pipeline.create_space(config, base_dir=Path(args.config).parent)
    pipeline.run_project(space)
    _save(space, args.out)
    return 0


def _stage_cmd(args, runner) -> int:
    space = _load_bundle(args)
    runner(space)
    _save(space, args.out)
    return 0


def cmd_deform(args) -> int:
    space = _load_bundle(args)
    path = _parse_path(args.path)
    if len(path) < 2:
        raise InvalidInputError("--path needs >= 2 points (zero-length trajectory)")
    frames = pipeline.run_deform(space, args.landmark, path,
                                 steps=args.steps, smoothing=args.smoothing)
    out = Path(args.frames_out or (Path(args.out) / "frames"))
    if args.binary:
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_frame_stream(out, frames)
        print(out)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            write_obj(frame, out / f"frame_{i:04d}.obj")
        print(out)
    return 0


def _write_frame_stream(path: Path, frames) -> None:
    """Binary frame stream: shared face buffer + per-frame f32 vertex buffers."""
    mesh = frames[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", len(frames), len(mesh.vertices), len(mesh.faces)))
        fh.write(mesh.faces.astype("<u4").tobytes())
        for frame in frames:
            fh.write(frame.vertices.astype("<f4").tobytes())


def cmd_energy_report(args) -> int:
    space = _load_bundle(args)
    out_csv = args.report_out or str(Path(args.out) / "energy_report.csv")
    summary = pipeline.run_energy_report(space, out_csv=out_csv,
                                         n_paths=args.paths, nodes=args.nodes,
                                         seed=args.seed)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    space = bundle_io.load(args.bundle)
    app = create_app(space, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deformspace", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--set", action="append", nargs=2, metavar=("KEY", "JSON"),
                       help="config override, e.g. --set trainmap.iters 500")
        if needs_out:
            p.add_argument("--out", required=True, help="bundle directory")

    p = sub.add_parser("make-demo", help="write a synthetic demo space + config")
    p.add_argument("--out", required=True)
    p.add_argument("--family", default="bump-ellipsoid",
                   choices=["linear", "bump-ellipsoid", "frozen-net"])
    p.add_argument("--landmarks", type=int, default=6)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--point-count", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_demo)

    p = sub.add_parser("project", help="create a bundle and project landmark meshes")
    p.add_argument("--config", required=True, help="pipeline config (TOML or JSON)")
    p.add_argument("--generator", help="generator config file overriding the config")
    common(p)
    p.set_defaults(func=cmd_project)

    for stage, runner in [
        ("embed", pipeline.run_embed),
        ("geodesics", pipeline.run_geodesics),
        ("train-map", pipeline.run_train_map),
        ("switchpoints", pipeline.run_switchpoints),
    ]:
        p = sub.add_parser(stage, help=f"run the {stage} stage on a bundle")
        common(p)
        p.set_defaults(func=lambda a, r=runner: _stage_cmd(a, r))

    p = sub.add_parser("deform", help="deform a landmark mesh along a 2D path")
    common(p)
    p.add_argument("--landmark", type=int, required=True)
    p.add_argument("--path", required=True, help='2D polyline: "x,y;x,y;..."')
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--smoothing", type=float, default=None)
    p.add_argument("--frames-out", default=None)
    p.add_argument("--binary", action="store_true", help="write one binary frame stream")
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("energy-report", help="sampled-path energy CSV (ours/Z-linear/Z-opt)")
    common(p)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--report-out", default=None)
    p.set_defaults(func=cmd_energy_report)

    p = sub.add_parser("serve", help="serve a bundle for interactive exploration")
    p.add_argument("--bundle", required=True)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", default=None,
                   help="directory with the built browser UI (e.g. frontend/)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, BundleError, OutsideDomainError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 2
    except (TrainingDivergedError, NumericalError) as exc:
        logger.error("numerical failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
