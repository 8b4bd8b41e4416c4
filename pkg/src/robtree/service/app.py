"""Stateless HTTP service for robust tree fitting and attack evaluation.

Every request carries its own data and configuration; responses echo the
resolved config so runs are reproducible from their output alone.
"""

import time

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..adversary import adversarial_accuracy
from ..data import Dataset, Scaler, minmax_scale, stratified_kfold
from ..threat import parse_threat_spec
from ..tree import FitParams, Leaf, deserialize, fit
from .schemas import (
    CrossValidateRequest,
    CrossValidateResponse,
    EvaluateRequest,
    EvaluateResponse,
    FitRequest,
    FitResponse,
    FitSummary,
    FoldMetrics,
    GridRequest,
    GridResponse,
)

app = FastAPI(title="robtree", version=__version__)


@app.exception_handler(ValueError)
def _value_error_handler(request, exc):
    # domain validation errors (threat grammar, data shape, model docs)
    return JSONResponse(status_code=422, content={"detail": str(exc)})


def _prepare(rows, labels, categorical, feature_names):
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("rows must be a non-empty rectangular matrix")
    y = np.asarray(labels, dtype=int)
    if y.shape != (X.shape[0],):
        raise ValueError("labels length does not match rows")
    cats = set(categorical)
    if not cats <= set(range(X.shape[1])):
        raise ValueError("categorical index out of range")
    kinds = ["categorical" if j in cats else "numerical"
             for j in range(X.shape[1])]
    names = list(feature_names or (f"f{j}" for j in range(X.shape[1])))
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length does not match rows")
    return X, y, kinds, names


def _parse_threat(spec, categorical, n_features):
    if spec is None:
        return None
    return parse_threat_spec(spec.tokens, categorical=categorical,
                             attacked_classes=spec.attacked_classes,
                             n_features=n_features)


def _scale_train(X, y, kinds, names, scale):
    if not scale:
        return X, None
    ds = Dataset(X=X, y=y, feature_names=names, kinds=kinds, label_mapping={})
    scaled, scaler = minmax_scale(ds)
    return scaled.X, scaler


def _node_counts(node):
    if isinstance(node, Leaf):
        return 1, 0
    left_leaves, left_inner = _node_counts(node.left)
    right_leaves, right_inner = _node_counts(node.right)
    return left_leaves + right_leaves, left_inner + right_inner + 1


def _load_model(doc):
    if not isinstance(doc, dict):
        raise ValueError("model document must be an object")
    if "tree" in doc:
        tree = deserialize(doc["tree"])
        pre = doc.get("preprocess")
        scaler = Scaler.from_doc(pre) if pre else None
        if scaler is not None and len(scaler.kinds) != tree.n_features:
            raise ValueError("preprocess arity does not match the tree")
        return tree, scaler
    return deserialize(doc), None


def _base_config(command, req):
    return {
        "command": command,
        "seed": req.options.seed,
        "rho": req.options.rho,
        "max_depth": req.options.max_depth,
        "min_samples_split": req.options.min_samples_split,
        "scale": req.scale,
        "categorical": sorted(req.categorical),
        "threat": None if req.threat is None else req.threat.model_dump(),
        "n_samples": len(req.rows),
        "n_features": len(req.rows[0]) if req.rows else 0,
    }


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/fit", response_model=FitResponse)
def fit_endpoint(req: FitRequest):
    X, y, kinds, names = _prepare(req.rows, req.labels, req.categorical,
                                  req.feature_names)
    X, scaler = _scale_train(X, y, kinds, names, req.scale)
    threat = _parse_threat(req.threat, req.categorical, X.shape[1])
    params = FitParams(max_depth=req.options.max_depth,
                       min_samples_split=req.options.min_samples_split,
                       rho=req.options.rho, seed=req.options.seed)
    start = time.perf_counter()
    tree = fit(X, y, threat, params, feature_names=names,
               categorical=req.categorical)
    elapsed = time.perf_counter() - start
    train = adversarial_accuracy(tree, X, y)
    leaves, inner = _node_counts(tree.root)
    return FitResponse(
        model={
            "format": "robtree-model",
            "tree": tree.to_doc(),
            "preprocess": None if scaler is None else scaler.to_doc(),
        },
        summary=FitSummary(
            depth=tree.depth(), n_nodes=leaves + inner, n_leaves=leaves,
            train_accuracy=train.accuracy,
            train_adversarial_accuracy=train.adversarial_accuracy,
            fit_seconds=elapsed,
        ),
        config=_base_config("fit", req),
    )


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate_endpoint(req: EvaluateRequest):
    tree, scaler = _load_model(req.model)
    X = np.asarray(req.rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ValueError(f"rows must have {tree.n_features} columns")
    y = np.asarray(req.labels, dtype=int)
    if scaler is not None:
        X = scaler.transform(X)
    categorical = [i for i, f in enumerate(tree.features)
                   if f["kind"] == "categorical"]
    threat = _parse_threat(req.threat, categorical, tree.n_features)
    rep = adversarial_accuracy(tree, X, y, threat, with_witnesses=req.report)
    return EvaluateResponse(
        accuracy=rep.accuracy,
        adversarial_accuracy=rep.adversarial_accuracy,
        n_samples=rep.n_samples,
        records=rep.records if req.report else None,
        config={
            "command": "evaluate",
            "threat": None if req.threat is None else req.threat.model_dump(),
            "n_samples": rep.n_samples,
        },
    )


@app.post("/cross-validate", response_model=CrossValidateResponse)
def cross_validate_endpoint(req: CrossValidateRequest):
    X, y, kinds, names = _prepare(req.rows, req.labels, req.categorical,
                                  req.feature_names)
    train_threat = _parse_threat(req.threat, req.categorical, X.shape[1])
    attack_threat = _parse_threat(req.attack, req.categorical, X.shape[1])
    params = FitParams(max_depth=req.options.max_depth,
                       min_samples_split=req.options.min_samples_split,
                       rho=req.options.rho, seed=req.options.seed)
    plan = stratified_kfold(y, req.folds, req.options.seed)
    folds = []
    for i, (train_idx, test_idx) in enumerate(plan.iter_splits()):
        X_train, X_test = X[train_idx], X[test_idx]
        if req.scale:
            ds = Dataset(X=X_train, y=y[train_idx], feature_names=names,
                         kinds=kinds, label_mapping={})
            scaled, scaler = minmax_scale(ds)
            X_train, X_test = scaled.X, scaler.transform(X_test)
        start = time.perf_counter()
        tree = fit(X_train, y[train_idx], train_threat, params,
                   feature_names=names, categorical=req.categorical)
        elapsed = time.perf_counter() - start
        attack = attack_threat if attack_threat is not None else tree.threat
        rep = adversarial_accuracy(tree, X_test, y[test_idx], attack)
        folds.append(FoldMetrics(
            fold=i, accuracy=rep.accuracy,
            adversarial_accuracy=rep.adversarial_accuracy,
            fit_seconds=elapsed,
        ))
    accs = np.array([f.accuracy for f in folds])
    advs = np.array([f.adversarial_accuracy for f in folds])
    config = _base_config("cross-validate", req)
    config["folds"] = req.folds
    config["attack"] = None if req.attack is None else req.attack.model_dump()
    return CrossValidateResponse(
        folds=folds,
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),
        mean_adversarial_accuracy=float(advs.mean()),
        std_adversarial_accuracy=float(advs.std()),
        config=config,
    )


@app.post("/grid", response_model=GridResponse)
def grid_endpoint(req: GridRequest):
    tree, _ = _load_model(req.model)
    if req.features is None:
        if tree.n_features != 2:
            raise ValueError(
                f"model has {tree.n_features} features; "
                "pass the two feature indices to plot")
        fx, fy = 0, 1
    else:
        fx, fy = req.features
    for f in (fx, fy):
        if not 0 <= f < tree.n_features:
            raise ValueError(f"feature index {f} out of range")
        if tree.features[f]["kind"] != "numerical":
            raise ValueError(f"feature {f} is categorical; grids need "
                             "numerical axes")
    if fx == fy:
        raise ValueError("grid features must be distinct")

    fill = []
    for f in tree.features:
        if f["kind"] == "numerical":
            lo, hi = f["range"]
            fill.append((lo + hi) / 2.0)
        else:
            fill.append(0.0)

    def centers(feature, r):
        lo, hi = tree.feature_range(feature)
        return lo + (np.arange(r) + 0.5) * (hi - lo) / r

    r = req.resolution
    xs, ys = centers(fx, r), centers(fy, r)
    points = np.tile(np.asarray(fill), (r * r, 1))
    points[:, fx] = np.repeat(xs, r)
    points[:, fy] = np.tile(ys, r)
    labels = tree.predict(points)
    rows = [(float(points[i, fx]), float(points[i, fy]), int(labels[i]))
            for i in range(r * r)]
    return GridResponse(feature_x=fx, feature_y=fy, rows=rows)
