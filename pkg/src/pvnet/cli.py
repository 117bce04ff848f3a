"""The ``pvnet`` command: gen-data, train, eval, occlude, gradcheck.

Exit codes: 0 success, 1 user error (bad input, files, config), 2 internal
error (non-finite loss, failed gradient check, unexpected exception).
"""
import argparse
import hashlib
import os
import sys
import traceback

from .config import Config
from .errors import NumericalError, PVNetError

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2

RANKING_FILE = "ranking.txt"
DENSITY_FILE = "density.pvrs"


class GradcheckFailed(Exception):
    pass


def _load_config(path):
    from .storage import parse_config

    return parse_config(path) if path else Config()


def _require_dir(path):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"directory does not exist: {path}")
    if not os.access(path, os.W_OK):
        raise PermissionError(f"directory is not writable: {path}")


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def cmd_gen_data(args):
    from .synthdata import FLEET_FILE, POWER_FILE, RASTER_FILE, generate_dataset

    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    _require_dir(args.out_dir)
    raster, power, fleet = generate_dataset(cfg, args.out_dir)
    print(f"raster {list(raster.frames.shape)} series {len(power)} steps, "
          f"{len(fleet)} plants, total capacity {fleet.total_capacity:.6g} MW")
    for name in (RASTER_FILE, POWER_FILE, FLEET_FILE):
        print(f"  {name}  sha256:{_sha(os.path.join(args.out_dir, name))}")
    return EXIT_OK


def cmd_train(args):
    from .model import format_loss_log, save_checkpoint
    from .pipeline import train_on_data
    from .storage import atomic_write
    from .synthdata import load_dataset

    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    for path in (args.out, args.log):
        if path:
            _require_dir(os.path.dirname(os.path.abspath(path)))
    raster, power, fleet = load_dataset(args.data_dir)

    def progress(epoch, tr, va):
        if not args.quiet:
            print(f"epoch {epoch:4d}  train {tr:.6e}  val {va:.6e}", flush=True)

    result, tr, va, stats = train_on_data(cfg, raster, power, fleet, progress)
    save_checkpoint(args.out, result.params, cfg, stats, raster.grid)
    if args.log:
        atomic_write(args.log, format_loss_log(result.history).encode("ascii"))
    print(f"best epoch {result.best_epoch} of {cfg.epochs}; {len(tr)} train / {len(va)} val windows; "
          f"checkpoint {args.out}")
    return EXIT_OK


def _load_for_checkpoint(args):
    from .model import load_checkpoint
    from .pipeline import check_grid, validation_split
    from .synthdata import load_dataset

    params, cfg, stats, grid = load_checkpoint(args.checkpoint)
    raster, power, fleet = load_dataset(args.data_dir)
    check_grid(grid, raster.grid, "checkpoint")
    val = validation_split(cfg, raster, power, stats)
    return params, cfg, stats, raster, power, fleet, val


def report_paths(report):
    root, ext = os.path.splitext(report)
    return report, root + ".csv" if ext != ".csv" else root + ".values.csv"


def cmd_eval(args):
    from .pipeline import evaluate_validation
    from .storage import atomic_write

    text_path, csv_path = report_paths(args.report)
    _require_dir(os.path.dirname(os.path.abspath(text_path)))
    params, cfg, _, _, power, fleet, val = _load_for_checkpoint(args)
    ev = evaluate_validation(val, power, params, cfg, fleet.total_capacity)
    text, delimited = ev.report(header=cfg.to_text().rstrip())
    atomic_write(text_path, text.encode("utf-8"))
    atomic_write(csv_path, delimited.encode("utf-8"))
    print(f"model nRMSE {ev.model.nrmse:.4f} %  nMAE {ev.model.nmae:.4f} %  | "
          f"persistence nRMSE {ev.baseline.nrmse:.4f} %  nMAE {ev.baseline.nmae:.4f} %  "
          f"(n={ev.model.n_points})")
    print(f"report {text_path}, values {csv_path}")
    return EXIT_OK


def cmd_occlude(args):
    from . import occlusion as occ
    from .model import PVNetConfig
    from .series import RasterSeries
    from .storage import atomic_write, write_raster

    _require_dir(args.out_dir)
    params, cfg, _, _, _, fleet, val = _load_for_checkpoint(args)
    n = args.samples if args.samples is not None else cfg.occlusion_samples
    if n > len(val):
        print(f"warning: --samples {n} exceeds the {len(val)} validation windows; using {len(val)}",
              file=sys.stderr)
        n = len(val)
    positions = occ.sample_windows(val, n, cfg.seed)
    mcfg = PVNetConfig.from_config(cfg)
    t0 = val.target_times[positions[0]]
    maps = []
    for ch in val.channels:
        m = occ.sensitivity_map(params, mcfg, val, ch, positions)
        maps.append(m)
        write_raster(os.path.join(args.out_dir, f"sensitivity_{ch}.pvrs"), m.to_raster(t0, val.dt))
        occ.write_pgm(os.path.join(args.out_dir, f"sensitivity_{ch}.pgm"), m.values)
        print(f"{ch:<6} total sensitivity {m.values.sum():.6g} MW", flush=True)
    density = occ.density_map(fleet)
    write_raster(os.path.join(args.out_dir, DENSITY_FILE),
                 RasterSeries(grid=density.grid, channels=("CAPACITY",), t0=t0, dt=val.dt,
                              frames=density.values[None, None]))
    ranking = occ.channel_ranking(maps, order=val.channels)
    totals = {m.channel: float(m.values.sum()) for m in maps}
    lines = [f"{i} {ch} {totals[ch]:.9g}" for i, ch in enumerate(ranking, start=1)]
    atomic_write(os.path.join(args.out_dir, RANKING_FILE), ("\n".join(lines) + "\n").encode("ascii"))
    rho = occ.spatial_agreement(maps[val.channels.index("DSWRF")], density)
    print(f"ranking: {' > '.join(ranking)}")
    print(f"Spearman(DSWRF sensitivity, capacity density) = {rho:.4f}  ({len(positions)} windows)")
    return EXIT_OK


def cmd_gradcheck(args):
    from . import gradcheck

    results = gradcheck.run_all(seed=args.seed, n_seeds=args.n_seeds)
    sys.stdout.write(gradcheck.format_results(results))
    failed = [r.layer for r in results if not r.passed]
    if failed:
        raise GradcheckFailed("gradient check failed for: " + ", ".join(failed))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pvnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("gen-data", help="generate a synthetic raster, power series and fleet")
    s.add_argument("--config", default=None, help="key = value config file (default: built-in defaults)")
    s.add_argument("--out-dir", required=True, help="existing, writable output directory")
    s.add_argument("--seed", type=int, default=None, help="override the config seed")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train on a generated dataset and save the best checkpoint")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--config", default=None, help="key = value config file (default: built-in defaults)")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--log", default=None, help="loss log path (one 'epoch train val' line per epoch)")
    s.add_argument("--seed", type=int, default=None, help="override the config seed")
    s.add_argument("--quiet", action="store_true", help="do not print per-epoch progress")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="compare the model with 24 h persistence on the validation split")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--report", required=True, help="text report path; values go next to it as .csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("occlude", help="occlusion sensitivity maps, density map and channel ranking")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out-dir", required=True, help="existing, writable output directory")
    s.add_argument("--samples", type=int, default=None,
                   help="validation windows to average over (default: config occlusion_samples)")
    s.set_defaults(func=cmd_occlude)

    s = sub.add_parser("gradcheck", help="finite-difference check of every layer and a tiny network")
    s.add_argument("--seed", type=int, default=0, help="first seed")
    s.add_argument("--n-seeds", type=int, default=10, help="number of seeds")
    s.set_defaults(func=cmd_gradcheck)
    return p


def _thread_limit():
    raw = os.environ.get("PVNET_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise PVNetError(f"PVNET_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise PVNetError(f"PVNET_THREADS must be >= 1, got {n}")
    return n


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=_thread_limit()):
            return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except GradcheckFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (PVNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
