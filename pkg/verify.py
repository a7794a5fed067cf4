#!/usr/bin/env python3
"""
Verification script to smoke-test densecheck functionality.

This script exercises the core pipeline without requiring full installation.
"""

import os
import shutil
import sys
import tempfile

# Add src to path for testing
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from densecheck import (  # noqa: E402
    LossConfig,
    SequenceManifest,
    depth_metrics,
    generate_sequence,
    make_walker,
    normal_metrics,
    pair_metrics,
    stage1_loss,
)
from densecheck.features import run_cwa_gradcheck  # noqa: E402


def check_synth_and_metrics():
    """Render a short sequence and score it against itself."""
    print("🧪 Testing Ground Truth + Metrics...")

    tmpdir = tempfile.mkdtemp()
    try:
        manifest = generate_sequence(make_walker(0, 3), tmpdir)
        print(f"   ✅ Rendered {manifest.frame_count} frames into {tmpdir}")

        manifest = SequenceManifest.load(tmpdir)
        frames = [manifest.load_frame(k) for k in range(manifest.frame_count)]
        gt = frames[0]

        depth = depth_metrics(gt.depth, gt.depth, gt.mask)
        normal = normal_metrics(gt.normal, gt.normal, gt.mask)
        assert depth.rmse < 1e-6
        assert normal.mean_deg < 1e-3
        print(f"   ✅ Self-evaluation: RMSE {depth.rmse:.2e}, mean angle {normal.mean_deg:.2e}°")

        fwd, bwd = manifest.load_flows(0)
        temporal = pair_metrics(frames[0], frames[1], frames[0], frames[1], fwd, bwd_flow=bwd)
        print(f"   ✅ Temporal pair: OPW {temporal.opw:.4g} over {temporal.pixel_count} px")

        breakdown = stage1_loss(gt, gt, LossConfig())
        print(f"   ✅ Stage-1 loss on ground truth: {breakdown.total:.4g}")
        return True
    except Exception as e:
        print(f"   ❌ Pipeline failed: {e}")
        return False
    finally:
        shutil.rmtree(tmpdir, ignore_errors=True)


def check_gradients():
    """Compare channel-attention gradients with finite differences."""
    print("\n🧪 Testing Channel-Attention Gradients...")

    worst = max(run_cwa_gradcheck(seed).max_error for seed in range(5))
    if worst < 1e-3:
        print(f"   ✅ Max relative error {worst:.2e}")
        return True
    print(f"   ❌ Max relative error {worst:.2e}")
    return False


def check_cli_basic():
    """Test that CLI module can be imported."""
    print("\n🧪 Testing CLI Import...")

    try:
        from densecheck import cli  # noqa: F401

        print("   ✅ CLI module imported successfully")
        return True
    except Exception as e:
        print(f"   ❌ CLI import failed: {e}")
        return False


def main():
    """Run all verification checks."""
    print("=" * 60)
    print("densecheck - Verification Script")
    print("=" * 60)

    results = [
        ("Ground Truth + Metrics", check_synth_and_metrics()),
        ("Gradients", check_gradients()),
        ("CLI Import", check_cli_basic()),
    ]

    print("\n" + "=" * 60)
    print("VERIFICATION SUMMARY")
    print("=" * 60)

    for name, passed in results:
        status = "✅ PASSED" if passed else "❌ FAILED"
        print(f"{name:25} {status}")

    print("=" * 60)
    if all(passed for _, passed in results):
        print("🎉 ALL CHECKS PASSED! Package is working correctly.")
        return 0
    print("❌ SOME CHECKS FAILED. Please review the errors above.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
