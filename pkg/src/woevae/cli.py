"""Command line pipeline: synth | transform | train | embed | label | report | all.

Stages communicate through files in the output directory::

    synth      dataset.csv, schema.json
    transform  transform.json, matrix.csv, split.json
    train      params.json, history.csv
    embed      embedding.csv
    label      assignment.csv, clusters.json
    report     report.json, colormap_{latent,woe,raw}.csv

Every stage seed is derived from the master seed and the stage index, and
every output carries the SHA-256 of the effective configuration.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analyze, cluster, data, embed, transform, vae

log = logging.getLogger("woevae")

STAGES = ("synth", "split", "train", "embed", "label", "report")

DEFAULTS = {
    "seed": 0,
    "out": "woevae-out",
    "transform": {"kind": transform.WOE_COARSE, "k": 20, "max_bins": 5, "min_share": 0.05,
                  "missing_indicators": False},
    "split": {"train_fraction": 0.3},
    "architecture": "arch4",
    "train": {"batch_size": 100, "adagrad_epsilon": 1e-8, "momentum": 0.001, "log_every": 10},
    "embed": {"mode": "mean", "samples": 100},
    "labeling": {"rho": 0.25, "subsample_cap": 2000},
    "salient": {"sd_multiplier": 1.0, "epsilon_out": 1e-9, "space": "woe"},
    "report": {"pd_train_fraction": 0.7, "pd_lr": 0.5, "pd_iterations": 2000},
}


class StageError(RuntimeError):
    pass


def derive_seed(master: int, stage: str) -> int:
    """Stage seed: the stage index mixed into the master seed by SeedSequence hashing."""
    return int(np.random.SeedSequence([int(master), STAGES.index(stage)]).generate_state(1)[0])


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class Pipeline:
    cfg: dict
    base_dir: Path
    out: Path

    @classmethod
    def from_args(cls, config_path: str | None, seed: int | None, out: str | None) -> "Pipeline":
        raw = {}
        base = Path.cwd()
        if config_path:
            p = Path(config_path)
            try:
                raw = json.loads(p.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise StageError(f"config file {config_path} not found") from None
            base = p.resolve().parent
        cfg = _merge(DEFAULTS, raw)
        if seed is not None:
            cfg["seed"] = seed
        out_dir = Path(out) if out else base / cfg["out"]
        arch = cfg["architecture"]
        if isinstance(arch, str) and arch not in vae.PRESETS:
            raise StageError(f"unknown architecture preset {arch!r}")
        return cls(cfg, base, out_dir)

    # -- provenance ---------------------------------------------------------
    @property
    def config_hash(self) -> str:
        doc = {k: v for k, v in self.cfg.items() if k != "out"}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def comment(self) -> str:
        return f"config_sha256={self.config_hash}"

    @property
    def extra(self) -> dict:
        return {"config_sha256": self.config_hash}

    def seed(self, stage: str) -> int:
        return derive_seed(self.cfg["seed"], stage)

    def path(self, name: str) -> Path:
        return self.out / name

    def need(self, name: str, stage: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise StageError(f"missing {p}: run the '{stage}' stage first")
        return p

    # -- inputs -------------------------------------------------------------
    def dataset_paths(self) -> tuple[Path, Path]:
        if "dataset" in self.cfg:
            ds = self.base_dir / self.cfg["dataset"]
            sc = self.base_dir / self.cfg["schema"]
            for p in (ds, sc):
                if not p.exists():
                    raise StageError(f"input file {p} not found")
            return ds, sc
        return self.need("dataset.csv", "synth"), self.need("schema.json", "synth")

    def load_dataset(self) -> data.Dataset:
        ds_path, schema_path = self.dataset_paths()
        sf = data.load_schema(schema_path)
        return data.load_csv(ds_path, sf.features, sf.label_column, sf.missing_token)

    def load_matrix(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        p = self.need("matrix.csv", "transform")
        with open(p, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
        header = rows[0][1:]
        arr = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
        arr = arr.reshape(len(rows) - 1, len(header) + 1)
        return arr[:, 0].astype(np.intp), arr[:, 1:], header

    def load_split(self) -> data.SplitPlan:
        p = self.need("split.json", "transform")
        return data.SplitPlan.from_json(json.loads(p.read_text(encoding="utf-8")))

    # -- stages -------------------------------------------------------------
    def cmd_synth(self) -> None:
        sc = self.cfg.get("synth")
        if not sc:
            raise StageError("config has no 'synth' section")
        segs = [data.Segment.from_json(s) for s in sc["segments"]]
        ds = data.synth_generate(segs, int(sc["n"]), self.seed("synth"))
        self.out.mkdir(parents=True, exist_ok=True)
        data.write_csv(self.path("dataset.csv"), ds, "y", comment=self.comment)
        data.save_schema(self.path("schema.json"), ds.schema, "y")
        log.info("synth: %r", ds)

    def cmd_transform(self) -> None:
        ds = self.load_dataset()
        tc = self.cfg["transform"]
        spec = transform.fit_transform(ds, tc["kind"], int(tc["k"]), int(tc["max_bins"]),
                                       float(tc["min_share"]), tc.get("edges"),
                                       bool(tc["missing_indicators"]))
        X = transform.apply_transform(spec, ds)
        plan = data.split_majority(ds, float(self.cfg["split"]["train_fraction"]),
                                   self.seed("split"))
        self.out.mkdir(parents=True, exist_ok=True)
        transform.save_spec(self.path("transform.json"), spec, self.extra)
        with open(self.path("matrix.csv"), "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {self.comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id"] + list(spec.columns))
            for i, row in enumerate(X):
                w.writerow([i] + [repr(float(v)) for v in row])
        doc = plan.to_json()
        doc.update(self.extra)
        self.path("split.json").write_text(json.dumps(doc) + "\n", encoding="utf-8")
        log.info("transform: %s -> %d columns; %d training rows, %d eval rows", spec.kind,
                 spec.output_dim, len(plan.train_indices), len(plan.eval_indices))

    def architecture(self, input_dim: int) -> vae.Architecture:
        a = self.cfg["architecture"]
        over = {}
        if "epochs" in self.cfg["train"]:
            over["epochs"] = int(self.cfg["train"]["epochs"])
        if isinstance(a, str):
            return vae.Architecture.preset(a, input_dim, **over)
        kw = dict(a)
        kw["input_dim"] = input_dim
        kw.update(over)
        return vae.Architecture(**kw)

    def cmd_train(self) -> None:
        _, X, _ = self.load_matrix()
        plan = self.load_split()
        tc = self.cfg["train"]
        cfg = vae.TrainConfig(self.architecture(X.shape[1]), int(tc["batch_size"]),
                              self.seed("train"), float(tc["adagrad_epsilon"]),
                              float(tc["momentum"]), int(tc["log_every"]))
        params, hist = vae.train(X[plan.train_indices], cfg)
        vae.save_params(self.path("params.json"), params, self.extra)
        hist.to_csv(self.path("history.csv"), self.comment)
        log.info("train: %s, final -ELBO %.5f", cfg.architecture.preset_id,
                 hist.neg_elbo[-1] if len(hist) else float("nan"))

    def cmd_embed(self) -> None:
        params = vae.load_params(self.need("params.json", "train"))
        rows, X, _ = self.load_matrix()
        ec = self.cfg["embed"]
        if ec["mode"] == "mc":
            emb = embed.embed_mc(params, X, int(ec["samples"]), self.seed("embed"), rows)
        elif ec["mode"] == "mean":
            emb = embed.embed_mean(params, X, rows)
        else:
            raise StageError(f"unknown embed mode {ec['mode']!r}")
        embed.write_embedding_csv(self.path("embedding.csv"), emb, self.comment)
        log.info("embed: %d rows into %d dimensions", len(emb), emb.dim)

    def labeling_config(self, n: int) -> cluster.LabelingConfig:
        lc = {k: v for k, v in self.cfg["labeling"].items() if v is not None}
        lc["seed"] = self.seed("label")
        return cluster.LabelingConfig.for_size(n, **lc)

    def cmd_label(self) -> None:
        emb = embed.read_embedding_csv(self.need("embedding.csv", "embed"))
        cfg = self.labeling_config(len(emb))
        asg = cluster.label_latent(emb.points, cfg)
        cluster.write_assignment(self.path("assignment.csv"), self.path("clusters.json"),
                                 asg, emb.row_index, cfg, self.extra)
        log.info("label: %d clusters, sizes %s", asg.n_clusters, asg.sizes.tolist())

    def cmd_report(self) -> None:
        assignment = self.need("assignment.csv", "label")
        emb = embed.read_embedding_csv(self.need("embedding.csv", "embed"))
        spec = transform.load_spec(self.need("transform.json", "transform"))
        plan = self.load_split()
        ds = self.load_dataset()
        row_ids, labels = cluster.read_assignment(assignment)
        y = ds.labels[row_ids]

        sc = self.cfg["salient"]
        scfg = analyze.SalientConfig(float(sc["sd_multiplier"]), float(sc["epsilon_out"]))
        if sc.get("space", "woe") == "raw":
            enc = transform.RawEncoding.fit(ds, missing_indicators=True)
            feats, names = enc.encode(ds)[row_ids], list(enc.columns)
        else:
            feats, names = spec.pre_scale(ds)[row_ids], list(spec.columns)
        full = analyze.build_report(labels, y, feats, names, scfg)

        eval_mask = np.isin(row_ids, plan.eval_indices)
        ev = analyze.cluster_stats(labels[eval_mask], y[eval_mask])
        ev_sep = analyze.overlap_matrix(ev) if len(ev) >= 2 else np.zeros((1, 1), dtype=bool)

        doc = full.to_json()
        doc["eval_partition"] = analyze.ClusterReport(ev, ev_sep).to_json()
        doc["eval_partition"].pop("salient")
        doc.update(self.extra)
        with open(self.path("report.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        self._colormaps(ds, emb, row_ids)
        for c in full.clusters:
            log.info("cluster %d: n=%d dr=%.4f CI=(%.4f, %.4f)", c.cluster, c.n,
                     c.default_rate, c.ci_low, c.ci_high)

    def _colormaps(self, ds: data.Dataset, emb: embed.LatentEmbedding, row_ids) -> None:
        rc = self.cfg["report"]
        rng = np.random.default_rng(self.seed("report"))
        n = len(row_ids)
        perm = rng.permutation(n)
        k = int(float(rc["pd_train_fraction"]) * n)
        fit_idx, test_idx = np.sort(perm[:k]), np.sort(perm[k:])
        pos = {int(r): i for i, r in enumerate(emb.row_index)}
        Z = emb.points[[pos[int(r)] for r in row_ids]]
        y = ds.labels[row_ids]

        sources = {"latent": Z}
        try:
            woe = transform.fit_transform(ds, transform.WOE_COARSE)
            sources["woe"] = transform.woe_encode(woe.woe, ds)[row_ids]
        except transform.TransformError as exc:
            log.warning("colormap: WoE source skipped (%s)", exc)
        try:
            enc = transform.RawEncoding.fit(ds, missing_indicators=True)
            raw = enc.encode(ds)[row_ids]
            sd = raw.std(axis=0)
            sources["raw"] = (raw - raw.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        except transform.TransformError as exc:
            log.warning("colormap: raw source skipped (%s)", exc)
        for tag, F in sources.items():
            model = analyze.fit_pd_logistic(F[fit_idx], y[fit_idx], float(rc["pd_lr"]),
                                            int(rc["pd_iterations"]))
            pd = analyze.predict_pd(model, F[test_idx])
            analyze.colormap_export(Z[test_idx], pd, self.path(f"colormap_{tag}.csv"), tag,
                                    self.comment)

    def cmd_all(self) -> None:
        if "dataset" not in self.cfg:
            self.cmd_synth()
        self.cmd_transform()
        self.cmd_train()
        self.cmd_embed()
        self.cmd_label()
        self.cmd_report()


COMMANDS = ("transform", "train", "embed", "label", "report", "synth", "all")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="woevae", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON pipeline configuration")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        pipe = Pipeline.from_args(args.config, args.seed, args.out)
        getattr(pipe, f"cmd_{args.command}")()
    except (StageError, data.DataError, transform.TransformError, vae.TrainingError,
            vae.ParamsFileError, ValueError) as exc:
        print(f"woevae {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
