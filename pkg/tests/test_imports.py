from __future__ import annotations


def test_key_imports() -> None:
    import defect_harness
    import defect_harness.analysis.convergence
    import defect_harness.analysis.decay
    import defect_harness.cli
    import defect_harness.config
    import defect_harness.geometry.lattice
    import defect_harness.homogeneous.green
    import defect_harness.logging.events
    import defect_harness.potentials.tight_binding
    import defect_harness.predictor.dislocation
    import defect_harness.relax.minimize
    import defect_harness.reporting.summarize
    import defect_harness.stencil.norms
    import defect_harness.utils.parallel

    assert defect_harness.__version__
