"""Command-line front end.

Every subcommand is a pure function of its flags, input files and seed;
all randomness flows from the --seed flag. Meshes are normalized
(centered, scaled by the largest coordinate std) on load unless
--no-normalize is given; use the flag consistently across commands that
share artifacts.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .baseline import nn_classify
from .evaluation import (
    AssessmentConfig,
    MFBenchmarkConfig,
    inducibility,
    run_assessment,
    run_mf_benchmark,
)
from .geodesic import HeatGeodesicSolver
from .gpc import (
    ClassProbabilityField,
    LabeledDataset,
    load_classifier,
    predict,
    read_labels_csv,
    read_model_file,
    save_classifier,
    train,
    write_labels_csv,
    write_model_file,
)
from .inference import NutsConfig, PriorSpec
from .kernel import KernelParams
from .laplace import SpectralBasis, build_basis
from .mesh import load_mesh, load_mesh_with_attributes, normalize_coordinates
from .mfgpc import load_mf_classifier, predict_mf, save_mf_classifier, train_mf
from .sampling import FileOracle, SyntheticOracle, active_learning_loop, farthest_point_design
from .synth import field_to_labels, make_low_fidelity, sample_prior_field


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures: diagnostic + exit 1
        print(f"mgpc: error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgpc",
        description="Gaussian process classification on triangulated surfaces",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="build and cache the spectral basis")
    _mesh_flags(p)
    p.add_argument("--n-eig", type=int, default=1000)
    p.add_argument("--mass", choices=["lumped", "consistent"], default="lumped")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eigen)

    p = sub.add_parser("synth", help="generate synthetic ground-truth labels")
    _mesh_flags(p)
    p.add_argument("--basis", required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--nu", type=float, default=1.5)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--kappa-convention", choices=["paper-eq6", "spde"],
                   default="paper-eq6")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="labels CSV (all vertices, fidelity high)")
    p.add_argument("--ply-out", help="optional PLY with field and labels")
    p.add_argument("--low-out", help="optional calibrated low-fidelity labels CSV")
    p.add_argument("--agreement", type=float, default=0.85)
    p.add_argument("--ell-noise", type=float, default=0.2)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("design", help="farthest-point experimental design")
    _mesh_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-factor", type=float, default=1.0)
    p.add_argument("--out", required=True, help="CSV of design vertex ids")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("train", help="fit a classifier, persist posterior draws")
    p.add_argument("kind", choices=["gp", "mf", "nn"])
    _mesh_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--basis", help="eigenbasis cache (gp and mf)")
    p.add_argument("--priors", choices=["single", "mf"],
                   help="prior preset; defaults to the model's own")
    p.add_argument("--fidelity", choices=["high", "low", "all"], default="high",
                   help="entries used by gp/nn training (mf always uses both)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-lat", type=int, default=200)
    p.add_argument("--n-warmup", type=int, default=500)
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--target-accept", type=float, default=0.9)
    p.add_argument("--max-tree-depth", type=int, default=10)
    p.add_argument("--nu", type=float, default=1.5)
    p.add_argument("--kappa-convention", choices=["paper-eq6", "spde"],
                   default="paper-eq6")
    p.add_argument("--t-factor", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="full-mesh class probability field")
    p.add_argument("--model", required=True)
    _mesh_flags(p)
    p.add_argument("--basis", help="eigenbasis cache (gp and mf models)")
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--out", required=True, help="PLY with prob,mu,var properties")
    p.add_argument("--csv-out", help="optional CSV mirror")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("active", help="active-learning acquisition loop")
    _mesh_flags(p)
    p.add_argument("--basis", required=True)
    p.add_argument("--oracle", required=True,
                   help="synth:ell=..,seed=..[,eta=..,nu=..] or file:labels.csv")
    p.add_argument("--init", required=True, help="CSV of initial design vertex ids")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--priors", choices=["single", "mf"], default="single")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-lat", type=int, default=200)
    p.add_argument("--n-warmup", type=int, default=500)
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--target-accept", type=float, default=0.9)
    p.add_argument("--max-tree-depth", type=int, default=10)
    p.add_argument("--predict-thin", type=int, default=1)
    p.add_argument("--include-boundary", action="store_true",
                   help="keep boundary vertices as acquisition candidates")
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=_cmd_active)

    p = sub.add_parser("assess", help="synthetic benchmark harness")
    p.add_argument("--config", required=True, help="JSON configuration")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel cells (default: available cores)")
    p.set_defaults(func=_cmd_assess)

    p = sub.add_parser("inducibility", help="area fraction classified positive")
    p.add_argument("--field", required=True, help="PLY with a prob property")
    p.add_argument("--density", help="optional CSV vertex_id,rho")
    p.set_defaults(func=_cmd_inducibility)

    return parser


def _mesh_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mesh", required=True)
    p.add_argument("--no-normalize", action="store_true",
                   help="skip coordinate normalization on load")


def _load_mesh(args):
    mesh = load_mesh(args.mesh)
    if not args.no_normalize:
        mesh = normalize_coordinates(mesh)
    return mesh


def _load_basis(path, mesh) -> SpectralBasis:
    basis = SpectralBasis.load(path)
    if basis.n_vertices != mesh.n_vertices:
        raise ValueError(
            f"basis has {basis.n_vertices} vertices, mesh has {mesh.n_vertices}"
        )
    return basis


def _nuts_config(args) -> NutsConfig:
    return NutsConfig(n_warmup=args.n_warmup, n_samples=args.n_samples,
                      target_accept=args.target_accept,
                      max_tree_depth=args.max_tree_depth)


def _read_vertex_csv(path) -> np.ndarray:
    ids = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.split(",")[0] != "vertex_id":
            raise ValueError(f"{path}: expected a vertex_id CSV header")
        for line in fh:
            line = line.strip()
            if line:
                ids.append(int(line.split(",")[0]))
    return np.asarray(ids, dtype=np.int64)


def _write_vertex_csv(path, ids) -> None:
    with open(path, "w") as fh:
        fh.write("vertex_id\n")
        for vid in ids:
            fh.write(f"{int(vid)}\n")


def _cmd_eigen(args) -> int:
    mesh = _load_mesh(args)
    basis = build_basis(mesh, args.n_eig, mass=args.mass, seed=args.seed)
    basis.save(args.out)
    print(f"cached {basis.n_eig} eigenpairs for {mesh.n_vertices} vertices "
          f"-> {args.out}")
    return 0


def _cmd_synth(args) -> int:
    mesh = _load_mesh(args)
    basis = _load_basis(args.basis, mesh)
    params = KernelParams(eta=args.eta, ell=args.ell, nu=args.nu,
                          kappa_convention=args.kappa_convention)
    fld = sample_prior_field(basis, params, seed=args.seed)
    labels = field_to_labels(fld)
    dataset = LabeledDataset.from_labels(
        np.arange(mesh.n_vertices), labels, provenance=f"synth seed={args.seed}"
    )
    write_labels_csv(args.out, dataset)
    if args.ply_out:
        from .mesh import write_ply
        write_ply(args.ply_out, mesh,
                  {"field": fld, "label": labels.astype(np.float64)})
    if args.low_out:
        low = make_low_fidelity(fld, basis, ell_noise=args.ell_noise,
                                agreement_target=args.agreement,
                                seed=args.seed + 1, nu=args.nu,
                                kappa_convention=args.kappa_convention)
        write_labels_csv(args.low_out, LabeledDataset.from_labels(
            np.arange(mesh.n_vertices), low, fidelity="low",
            provenance=f"synth-low seed={args.seed}"))
    print(f"labels written -> {args.out}")
    return 0


def _cmd_design(args) -> int:
    mesh = _load_mesh(args)
    solver = HeatGeodesicSolver(mesh, t_factor=args.t_factor)
    design = farthest_point_design(mesh, args.n, seed=args.seed, solver=solver)
    _write_vertex_csv(args.out, design)
    print(f"{args.n}-point design -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    mesh = _load_mesh(args)
    data = read_labels_csv(args.data)
    data.validate_for_mesh(mesh)
    nuts = _nuts_config(args)
    meta = {"mesh": os.path.abspath(args.mesh),
            "normalized": not args.no_normalize}

    if args.kind == "nn":
        used = data if args.fidelity == "all" else data.subset(args.fidelity)
        if len(used) == 0:
            raise ValueError(f"no {args.fidelity!r} entries in {args.data}")
        header = {"model": "nn", "t_factor": args.t_factor, "meta": meta}
        arrays = {"train_vertex_ids": used.vertex_ids.astype(np.float64),
                  "train_labels": used.labels.astype(np.float64)}
        write_model_file(args.out, header, arrays)
        print(f"nn model ({len(used)} points) -> {args.out}")
        return 0

    if not args.basis:
        raise ValueError("gp and mf training require --basis")
    basis = _load_basis(args.basis, mesh)
    meta["basis"] = os.path.abspath(args.basis)

    if args.kind == "gp":
        used = data if args.fidelity == "all" else data.subset(args.fidelity)
        if len(used) == 0:
            raise ValueError(f"no {args.fidelity!r} entries in {args.data}")
        priors = (PriorSpec.multi_fidelity() if args.priors == "mf"
                  else PriorSpec.single_fidelity())
        clf = train(mesh, basis, used, priors=priors, seed=args.seed,
                    nuts=nuts, n_lat=args.n_lat, nu=args.nu,
                    kappa_convention=args.kappa_convention)
        save_classifier(args.out, clf, meta=meta)
        samples = clf.samples
    else:
        priors = (PriorSpec.single_fidelity() if args.priors == "single"
                  else PriorSpec.multi_fidelity())
        clf = train_mf(mesh, basis, data, priors=priors, seed=args.seed,
                       nuts=nuts, n_lat=args.n_lat, nu=args.nu,
                       kappa_convention=args.kappa_convention)
        save_mf_classifier(args.out, clf, meta=meta)
        samples = clf.samples

    diag_path = args.out + ".diagnostics.json"
    with open(diag_path, "w") as fh:
        json.dump(samples.diagnostics_report(), fh, indent=2, sort_keys=True)
    print(f"{args.kind} model -> {args.out} (diagnostics -> {diag_path})")
    return 0


def _cmd_predict(args) -> int:
    mesh = _load_mesh(args)
    header, arrays = read_model_file(args.model)
    kind = header["model"]
    query = np.arange(mesh.n_vertices)

    if kind == "nn":
        used = LabeledDataset.from_labels(
            arrays["train_vertex_ids"].astype(np.int64),
            arrays["train_labels"].astype(np.int64))
        solver = HeatGeodesicSolver(mesh, t_factor=float(header["t_factor"]))
        labels = nn_classify(mesh, used, query, solver=solver)
        # Degenerate hard-label field: prob is the label, mu/var are zero.
        fld = ClassProbabilityField(
            vertices=query, mean=np.zeros(query.size),
            variance=np.zeros(query.size),
            probability=labels.astype(np.float64), samples_used=0)
    else:
        if not args.basis:
            raise ValueError("gp and mf prediction require --basis")
        basis = _load_basis(args.basis, mesh)
        if kind == "gp":
            clf = load_classifier(args.model, basis)
            fld = predict(clf, query, thin=args.thin)
        elif kind == "mf":
            clf = load_mf_classifier(args.model, basis)
            fld = predict_mf(clf, query, thin=args.thin)
        else:
            raise ValueError(f"unknown model type {kind!r}")

    fld.export_ply(args.out, mesh)
    if args.csv_out:
        fld.export_csv(args.csv_out)
    print(f"prediction -> {args.out}")
    return 0


def _parse_oracle(spec: str, mesh, basis):
    if spec.startswith("file:"):
        dataset = read_labels_csv(spec[len("file:"):])
        high = dataset.subset("high")
        return FileOracle(high if len(high) else dataset)
    if spec.startswith("synth:"):
        options = {"eta": 1.0, "nu": 1.5, "kappa_convention": "paper-eq6"}
        for item in spec[len("synth:"):].split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ValueError(f"bad oracle option {item!r}")
            options[key.strip()] = value.strip()
        params = KernelParams(eta=float(options["eta"]),
                              ell=float(options["ell"]),
                              nu=float(options["nu"]),
                              kappa_convention=options["kappa_convention"])
        fld = sample_prior_field(basis, params, seed=int(options["seed"]))
        return SyntheticOracle(field_to_labels(fld))
    raise ValueError(f"oracle spec must start with synth: or file:, got {spec!r}")


def _cmd_active(args) -> int:
    mesh = _load_mesh(args)
    basis = _load_basis(args.basis, mesh)
    oracle = _parse_oracle(args.oracle, mesh, basis)
    init = _read_vertex_csv(args.init)
    priors = (PriorSpec.multi_fidelity() if args.priors == "mf"
              else PriorSpec.single_fidelity())
    data, clf = active_learning_loop(
        mesh, basis, oracle, init, budget=args.budget, priors=priors,
        seed=args.seed, nuts=_nuts_config(args), n_lat=args.n_lat,
        exclude_boundary=not args.include_boundary,
        predict_thin=args.predict_thin,
    )
    write_labels_csv(args.out_data, data)
    save_classifier(args.out_model, clf,
                    meta={"mesh": os.path.abspath(args.mesh),
                          "basis": os.path.abspath(args.basis)})
    print(f"active learning: {len(data)} labels -> {args.out_data}, "
          f"model -> {args.out_model}")
    return 0


def _cmd_assess(args) -> int:
    with open(args.config) as fh:
        cfg = json.load(fh)

    mesh = load_mesh(cfg["mesh"])
    if cfg.get("normalize", True):
        mesh = normalize_coordinates(mesh)
    basis_path = cfg.get("basis")
    if basis_path and os.path.exists(basis_path):
        basis = _load_basis(basis_path, mesh)
    else:
        basis = build_basis(mesh, int(cfg.get("n_eig", 1000)),
                            seed=int(cfg.get("seed", 0)))
        if basis_path:
            basis.save(basis_path)

    def parse_nuts(section):
        return NutsConfig(
            n_warmup=int(section.get("n_warmup", 500)),
            n_samples=int(section.get("n_samples", 500)),
            target_accept=float(section.get("target_accept", 0.9)),
            max_tree_depth=int(section.get("max_tree_depth", 10)),
        )

    nuts = parse_nuts(cfg.get("nuts", {}))
    al_nuts = parse_nuts(cfg["al_nuts"]) if "al_nuts" in cfg else None
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)

    study = cfg.get("study", "single")
    if study == "single":
        config = AssessmentConfig(
            length_scales=tuple(cfg.get("length_scales", (0.2, 0.4, 0.6, 0.8, 1.0))),
            n_fields=int(cfg.get("n_fields", 10)),
            sample_grid=tuple(cfg.get("sample_grid", (20, 40, 60, 80, 100))),
            seed=int(cfg.get("seed", 0)),
            classifiers=tuple(cfg.get("classifiers", ("nn", "gp", "al"))),
            eta=float(cfg.get("eta", 1.0)),
            nu=float(cfg.get("nu", 1.5)),
            kappa_convention=cfg.get("kappa_convention", "paper-eq6"),
            n_lat=int(cfg.get("n_lat", 200)),
            nuts=nuts,
            al_nuts=al_nuts,
            init_design=int(cfg.get("init_design", 20)),
            predict_thin=int(cfg.get("predict_thin", 1)),
            acquisition_thin=int(cfg.get("acquisition_thin", 1)),
            jobs=jobs,
        )
        out_csv = cfg.get("out_csv", "assessment.csv")
        out_summary = cfg.get("out_summary", "assessment_summary.json")
        run_assessment(mesh, basis, config, out_csv=out_csv,
                       out_summary=out_summary)
        print(f"assessment -> {out_csv}, summary -> {out_summary}")
    elif study == "mf":
        config = MFBenchmarkConfig(
            ell_truth=float(cfg.get("ell_truth", 0.6)),
            n_replicates=int(cfg.get("n_replicates", 10)),
            n_low=int(cfg.get("n_low", 100)),
            n_high=int(cfg.get("n_high", 40)),
            agreement_target=float(cfg.get("agreement_target", 0.85)),
            ell_noise=float(cfg.get("ell_noise", 0.2)),
            seed=int(cfg.get("seed", 0)),
            n_lat=int(cfg.get("n_lat", 200)),
            nuts=nuts,
            predict_thin=int(cfg.get("predict_thin", 1)),
        )
        out_csv = cfg.get("out_csv", "mf_benchmark.csv")
        run_mf_benchmark(mesh, basis, config, out_csv=out_csv)
        print(f"multi-fidelity benchmark -> {out_csv}")
    else:
        raise ValueError(f"unknown study {study!r}")
    return 0


def _cmd_inducibility(args) -> int:
    mesh, attrs = load_mesh_with_attributes(args.field)
    if "prob" not in attrs:
        raise ValueError(f"{args.field} carries no 'prob' vertex property")
    labels = (attrs["prob"] > 0.5).astype(np.int64)
    density = None
    if args.density:
        density = np.zeros(mesh.n_vertices)
        seen = np.zeros(mesh.n_vertices, dtype=bool)
        with open(args.density) as fh:
            header = fh.readline().strip().split(",")
            if header[:2] != ["vertex_id", "rho"]:
                raise ValueError(
                    f"{args.density}: expected header vertex_id,rho")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                vid_s, rho_s = line.split(",")[:2]
                vid = int(vid_s)
                density[vid] = float(rho_s)
                seen[vid] = True
        if not seen.all():
            raise ValueError("density CSV must cover every vertex")
    value = inducibility(labels, mesh, density=density)
    print(repr(value))
    return 0


if __name__ == "__main__":
    sys.exit(main())
