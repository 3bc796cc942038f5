"""Experiment pipeline: data -> denoiser -> classifier -> samples -> audits -> reports.

Every stage writes its artifacts under run.out and records the hash of the config sections it
depends on. A later run reuses a stage whose artifacts carry the current hash, unless that stage
is forced. Reports embed the full config hash and the build identifier.
"""

import dataclasses
import hashlib
import json
import logging
import os

import importlib_metadata
import numpy as np
import petl as etl
from packaging.version import InvalidVersion, Version

from cpsample_lab.common import (
    ArchiveFormatException,
    ConfigException,
    MaxTriesExhaustedException,
    StageFailureException,
)
from cpsample_lab.datasets import generate_dataset
from cpsample_lab.libaudit import (
    ball_report,
    calibrate_thresholds,
    estimate_local_lipschitz,
    lifted_features,
    measure_assumptions,
    mia_error,
    mia_z_test,
    permutation_test,
    similarity_report,
    verify_lemma,
)
from cpsample_lab.libmodels import (
    Classifier,
    Denoiser,
    assign_random_labels,
    classifier_accuracy,
    train_classifier,
    train_denoiser,
)
from cpsample_lab.libquality import frechet_report, guidance_sweep
from cpsample_lab.libsampler import (
    cp_epsilon_hat,
    cpsample_generate,
    ddim_generate,
    rejection_sample,
)
from cpsample_lab.util.archive import read_archive, write_archive

log = logging.getLogger(__name__)

DIST_NAME = "cpsample_lab"

STAGES = [
    "gen-data",
    "train-denoiser",
    "train-classifier",
    "sample",
    "audit-sim",
    "audit-mia",
    "audit-perm",
    "verify-lemma",
    "eval-frechet",
    "sweep",
]

OUTPUTS = {
    "gen-data": ["data.cpta"],
    "train-denoiser": ["denoiser.cpta"],
    "train-classifier": ["classifier.cpta"],
    "sample": ["samples.cpta"],
    "audit-sim": ["similarity_report.json", "ball_report.json"],
    "audit-mia": ["mia_report.json"],
    "audit-perm": ["permutation_report.json"],
    "verify-lemma": ["lemma_report.json"],
    "eval-frechet": ["frechet_report.json"],
    "sweep": ["sweep_report.json"],
}

DEPENDS = {
    "gen-data": [],
    "train-denoiser": ["gen-data"],
    "train-classifier": ["gen-data"],
    "sample": ["train-denoiser", "train-classifier"],
    "audit-sim": ["sample"],
    "audit-mia": ["train-denoiser", "train-classifier"],
    "audit-perm": ["sample"],
    "verify-lemma": ["sample"],
    "eval-frechet": ["sample"],
    "sweep": ["train-denoiser", "train-classifier"],
}

# config sections (or single 'section.key's) each stage's artifacts depend on, upstream included
SECTIONS = {
    "gen-data": ["dataset"],
    "train-denoiser": ["dataset", "schedule", "denoiser"],
    "train-classifier": ["dataset", "schedule", "classifier"],
    "sample": [
        "dataset",
        "schedule",
        "denoiser",
        "classifier",
        "guidance",
        # the rejection sampler's ball test
        "audit.delta",
        "audit.metric",
        "audit.max_tries",
        "audit.feature_mode",
        "audit.lift",
        "audit.calibrate",
        "run",
    ],
}


def build_id():
    """git-describe-style identifier of the installed build, eg: v0.2.1-4-g1a2b3c4-dirty."""
    try:
        raw = importlib_metadata.version(DIST_NAME)
    except importlib_metadata.PackageNotFoundError:
        return "unknown"
    try:
        v = Version(raw)
    except InvalidVersion:
        return raw
    if v.dev is None and not v.local:
        return f"v{v.public}"
    parts = [f"v{v.base_version}", str(v.dev or 0)]
    local = (v.local or "").split(".")
    parts += [p for p in local if p.startswith("g")]
    if any(p.startswith("d") for p in local):
        parts.append("dirty")
    return "-".join(parts)


def config_hash(config):
    return config.config_hash


def section_hash(config, sections):
    """sha256 of the canonical text of `sections`; 'audit.delta' keeps a single key."""
    keep = []
    for block in config.canonical_ini().split("\n["):
        name, _, body = block.lstrip("[").partition("]\n")
        if name in sections:
            keep.append(f"[{name}]\n{body.strip()}")
            continue
        keys = {s.partition(".")[2] for s in sections if s.startswith(name + ".")}
        if keys:
            lines = [line for line in body.splitlines() if line.partition(" = ")[0] in keys]
            keep.append("\n".join([f"[{name}]", *lines]))
    return hashlib.sha256("\n".join(keep).encode("utf-8")).hexdigest()


@dataclasses.dataclass
class PipelineResult:
    out: str
    statuses: dict = dataclasses.field(default_factory=dict)
    config_hash: str = ""


class Pipeline:
    def __init__(self, config, force=(), progress=False):
        self.config = config
        self.force = set(STAGES if force is True else force or ())
        self.progress = progress
        self.out = os.path.expanduser(config.run.out)
        self.hash = config_hash(config)
        self.build = build_id()
        self.result = PipelineResult(self.out, config_hash=self.hash)
        self.schedule = config.schedule.build()
        self._cache = {}

    # bookkeeping ---------------------------------------------------------------------------

    def path(self, name):
        return os.path.join(self.out, name)

    def stage_hash(self, stage):
        if stage in SECTIONS:
            return section_hash(self.config, SECTIONS[stage])
        return self.hash

    def _recorded_hash(self, name):
        try:
            if name.endswith(".cpta"):
                return json.loads(read_archive(self.path(name)).metadata).get("stage_hash")
            with open(self.path(name)) as f:
                return json.load(f).get("config_hash")
        except (OSError, ValueError, ArchiveFormatException):
            return None

    def is_fresh(self, stage):
        want = self.stage_hash(stage)
        return all(self._recorded_hash(name) == want for name in OUTPUTS[stage])

    def ensure(self, stage):
        """Run `stage` unless it already ran in this pipeline or its artifacts are fresh."""
        if stage in self.result.statuses:
            return
        for dep in DEPENDS[stage]:
            self.ensure(dep)
        if stage not in self.force and self.is_fresh(stage):
            log.info("%s: reusing checkpoint in %s", stage, self.out)
            self.result.statuses[stage] = "reused"
            return
        log.info("%s: running", stage)
        try:
            getattr(self, "stage_" + stage.replace("-", "_"))()
        except ConfigException:
            raise
        except Exception as e:
            raise StageFailureException(stage, e) from e
        self.result.statuses[stage] = "ran"

    def run(self, stages=None):
        os.makedirs(self.out, exist_ok=True)
        for stage in stages or STAGES:
            self.ensure(stage)
        return self.result

    def _meta(self, stage, **extra):
        return json.dumps({"stage": stage, "stage_hash": self.stage_hash(stage), **extra})

    def _write_report(self, name, report, **extra):
        report.write(self.path(name), config_hash=self.hash, build_id=self.build, **extra)

    # artifact loaders ----------------------------------------------------------------------

    def _archive(self, name):
        if name not in self._cache:
            self._cache[name] = read_archive(self.path(name))
        return self._cache[name]

    def data(self):
        archive = self._archive("data.cpta")
        return archive["train"].numpy(), archive["test"].numpy()

    def denoiser(self):
        c = self.config.denoiser
        net = Denoiser(self._dim(), c.hidden, c.emb_dim, self.schedule.T, c.seed)
        archive = self._archive("denoiser.cpta")
        return net.load({k[len("ema.") :]: v for k, v in archive.with_prefix("ema.").items()})

    def classifier(self):
        c = self.config.classifier
        net = Classifier(self._dim(), c.hidden, c.emb_dim, self.schedule.T, c.seed)
        archive = self._archive("classifier.cpta")
        return net.load({k[len("ema.") :]: v for k, v in archive.with_prefix("ema.").items()})

    def labels(self):
        return self._archive("classifier.cpta")["labels"].numpy().astype(np.uint8)

    def samples(self):
        archive = self._archive("samples.cpta")
        return {k: archive[k].numpy() for k in ("ddim", "cpsample", "rejection")}

    def sample_meta(self):
        return json.loads(self._archive("samples.cpta").metadata)

    def _dim(self):
        return self.data()[0].shape[1]

    def feature_fn(self):
        audit = self.config.audit
        if audit.feature_mode == "classifier":
            return self.classifier().features
        if audit.feature_mode == "lifted":
            return lifted_features(audit.lift)
        return None

    def frechet_mode(self):
        return "classifier" if self.config.audit.feature_mode == "classifier" else "identity"

    def limits(self):
        """(threshold, delta): as configured, or calibrated on the held-out set."""
        if "limits" not in self._cache:
            audit = self.config.audit
            if audit.calibrate:
                train, test = self.data()
                self._cache["limits"] = calibrate_thresholds(
                    test, train, audit.calibrate, audit.metric, self.feature_fn()
                )
            else:
                self._cache["limits"] = (audit.threshold, audit.delta)
        return self._cache["limits"]

    def _sampler_kwargs(self):
        return {"threads": self.config.run.threads, "progress": self.progress}

    # stages --------------------------------------------------------------------------------

    def stage_gen_data(self):
        train, test = generate_dataset(self.config.dataset)
        self._cache.pop("data.cpta", None)
        self._cache.pop("limits", None)
        write_archive(
            self.path("data.cpta"), {"train": train, "test": test}, self._meta("gen-data")
        )

    def _write_model(self, stage, name, result, extra=None):
        tensors = dict(result.model.params)
        tensors.update({f"ema.{k}": v for k, v in result.ema.params.items()})
        tensors["trace.loss"] = np.array(result.loss_trace, dtype=np.float64)
        tensors.update(extra or {})
        self._cache.pop(name, None)
        self._cache.pop("limits", None)
        meta = self._meta(stage, steps=result.steps, stop_reason=result.stop_reason)
        write_archive(self.path(name), tensors, meta)
        rows = [("step", "loss"), *enumerate(result.loss_trace, start=1)]
        etl.tocsv(etl.wrap(rows), self.path(name.replace(".cpta", "_loss.csv")))

    def stage_train_denoiser(self):
        c = self.config.denoiser
        train, _ = self.data()
        net = Denoiser(train.shape[1], c.hidden, c.emb_dim, self.schedule.T, c.seed)
        result = train_denoiser(
            train, self.schedule, c.train_config(), c.seed, denoiser=net, progress=self.progress
        )
        self._write_model("train-denoiser", "denoiser.cpta", result)

    def stage_train_classifier(self):
        c = self.config.classifier
        train, _ = self.data()
        labels = assign_random_labels(len(train), c.label_seed)
        net = Classifier(train.shape[1], c.hidden, c.emb_dim, self.schedule.T, c.seed)
        result = train_classifier(
            train, labels, self.schedule, c.train_config(), c.seed, net, self.progress
        )
        acc = classifier_accuracy(result.ema, train, labels.labels)
        log.info("classifier: clean label accuracy %.4f after %d steps", acc, result.steps)
        evals = np.array(result.eval_trace, dtype=np.float64).reshape(-1, 2)
        extra = {"labels": labels.labels.astype(np.float64), "trace.eval": evals}
        self._write_model("train-classifier", "classifier.cpta", result, extra)

    def stage_sample(self):
        cfg, run, audit = self.config.guidance, self.config.run, self.config.audit
        train, _ = self.data()
        den, clf = self.denoiser(), self.classifier()
        kw = self._sampler_kwargs()
        _, delta = self.limits()
        plain = ddim_generate(den, self.schedule, run.n_samples, run.seed, cfg, **kw)
        cp = cpsample_generate(den, clf, self.schedule, cfg, run.n_samples, run.seed, **kw)
        if cfg.record_trace:
            cp.write_trace(self.path("cpsample_trace.csv"))
        exhausted = False
        try:
            rejected, tries = rejection_sample(
                den,
                self.schedule,
                train,
                delta,
                audit.metric,
                audit.max_tries,
                run.n_samples,
                run.seed,
                cfg,
                self.feature_fn(),
                **kw,
            )
        except MaxTriesExhaustedException as e:
            log.warning("rejection sampler: %s", e)
            rejected, tries, exhausted = e.samples, e.tries_used, True
        self._cache.pop("samples.cpta", None)
        meta = self._meta(
            "sample",
            trigger_rate=cp.trigger_rate,
            rejection_tries=tries,
            rejection_exhausted=exhausted,
        )
        tensors = {"ddim": plain.samples, "cpsample": cp.samples, "rejection": rejected}
        write_archive(self.path("samples.cpta"), tensors, meta)

    def stage_audit_sim(self):
        audit = self.config.audit
        train, _ = self.data()
        samples = self.samples()
        fn = self.feature_fn()
        threshold, delta = self.limits()
        base = similarity_report(samples["ddim"], train, fn, threshold)
        cp = similarity_report(samples["cpsample"], train, fn, threshold, baseline=base)
        base.write_histogram(self.path("similarity_hist_ddim.csv"))
        cp.write_histogram(self.path("similarity_hist_cpsample.csv"))
        self._write_report("similarity_report.json", cp, ddim=base.to_dict())

        balls = {
            k: ball_report(v, train, delta, audit.metric, fn)
            for k, v in samples.items()
            if len(v)
        }
        meta = self.sample_meta()
        extra = {k: b.to_dict() for k, b in balls.items() if k != "cpsample"}
        extra["rejection_tries"] = meta["rejection_tries"]
        extra["rejection_exhausted"] = meta["rejection_exhausted"]
        extra["rejection_accepted"] = len(samples["rejection"])
        self._write_report("ball_report.json", balls["cpsample"], **extra)

    def stage_audit_mia(self):
        audit, cfg, seed = self.config.audit, self.config.guidance, self.config.run.seed
        train, test = self.data()
        den, clf = self.denoiser(), self.classifier()
        t, repeats = audit.noise_level(self.schedule.T), audit.mia_repeats

        def errors(fn):
            a = mia_error(fn, train, t, self.schedule, seed, repeats)
            b = mia_error(fn, test, t, self.schedule, seed + 1, repeats)
            return mia_z_test(a, b)

        plain = errors(lambda x, t: den.predict(x, t))
        protected = []
        for alpha in audit.mia_alphas:
            g = dataclasses.replace(cfg, alpha=alpha)
            rep = errors(lambda x, t, g=g: cp_epsilon_hat(den, clf, x, t, g, self.schedule)[0])
            protected.append({"alpha": alpha, **rep.to_dict()})
        self._write_report("mia_report.json", plain, cpsample=protected, t=t, repeats=repeats)

    def stage_audit_perm(self):
        audit, seed = self.config.audit, self.config.run.seed
        train, _ = self.data()
        samples = self.samples()
        subset = train[: audit.subset_size]
        fn = self.feature_fn()

        def test(x):
            return permutation_test(
                x, subset, train, audit.n_replicates, fn, seed, audit.level, self.progress
            )

        cp, plain = test(samples["cpsample"]), test(samples["ddim"])
        self._write_report("permutation_report.json", cp, ddim=plain.to_dict())

    def stage_verify_lemma(self):
        audit, seed = self.config.audit, self.config.run.seed
        train, _ = self.data()
        clf = self.classifier()
        cp = self.samples()["cpsample"]
        _, delta = self.limits()
        lipschitz = estimate_local_lipschitz(
            clf, train, 0, delta, audit.n_probe, seed, self.progress
        )
        lam = audit.kappa + lipschitz * delta
        assumptions = measure_assumptions(
            clf,
            train,
            self.labels(),
            self.schedule,
            audit.kappa,
            audit.n_noise,
            seed,
            samples=cp,
            lam=lam,
        )
        report = verify_lemma(
            lipschitz,
            audit.kappa,
            assumptions.gamma,
            assumptions.nu,
            delta,
            cp,
            train,
            audit.metric,
            self.feature_fn(),
        )
        self._write_report("lemma_report.json", report, assumptions=assumptions.to_dict())

    def stage_eval_frechet(self):
        mode = self.frechet_mode()
        _, test = self.data()
        samples = self.samples()
        clf = self.classifier() if mode == "classifier" else None
        cp = frechet_report(samples["cpsample"], test, clf, mode)
        plain = frechet_report(samples["ddim"], test, clf, mode)
        ratio = cp.frechet_distance / plain.frechet_distance if plain.frechet_distance else None
        self._write_report("frechet_report.json", cp, ddim=plain.to_dict(), ratio=ratio)

    def stage_sweep(self):
        sweep, audit = self.config.sweep, self.config.audit
        train, test = self.data()
        report = guidance_sweep(
            self.denoiser(),
            self.classifier(),
            self.schedule,
            self.config.guidance,
            sweep.grid(),
            train,
            test,
            sweep.n_samples,
            self.config.run.seed,
            self.limits(),
            audit.metric,
            self.feature_fn(),
            self.frechet_mode(),
            **self._sampler_kwargs(),
        )
        report.write_table(self.path("sweep.csv"))
        self._write_report("sweep_report.json", report)
        if report.tuned is None:
            log.warning("sweep: no setting kept the Fréchet distance within budget")
        else:
            tuned = report.tuned
            log.info("sweep: tuned alpha=%g scale=%g", tuned["alpha"], tuned["scale"])


def run_pipeline(config, stages=None, force=(), progress=False):
    return Pipeline(config, force, progress).run(stages)
