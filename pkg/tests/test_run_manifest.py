#!/usr/bin/env python3
"""
Unit tests for run_manifest.py
"""
import json
import os
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from run_manifest import MANIFEST_NAME, RunManifest


class TestRunManifest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self._tmp.name) / "abc123"

    def tearDown(self):
        self._tmp.cleanup()

    def test_persists_across_instances(self):
        manifest = RunManifest.in_dir(self.run_dir)
        manifest.set("config_hash", "abc123")
        manifest.mark_done(0, final_test_accuracy=0.91)
        manifest.mark_failed(1, "boom")

        reloaded = RunManifest.in_dir(self.run_dir)
        self.assertEqual(reloaded.path, self.run_dir / MANIFEST_NAME)
        self.assertEqual(reloaded.get("config_hash"), "abc123")
        self.assertEqual(reloaded.seeds_with_status("completed"), [0])
        self.assertEqual(reloaded.seeds_with_status("failed"), [1])
        self.assertEqual(reloaded.get("seeds")["0"]["final_test_accuracy"], 0.91)

    def test_setdefault_keeps_first_value(self):
        manifest = RunManifest.in_dir(self.run_dir)
        self.assertEqual(manifest.setdefault("created", "first"), "first")
        self.assertEqual(manifest.setdefault("created", "second"), "first")

    def test_rerun_overwrites_seed_status(self):
        manifest = RunManifest.in_dir(self.run_dir)
        manifest.mark_failed(3, "bad")
        manifest.mark_done(3)
        self.assertEqual(manifest.seeds_with_status("completed"), [3])
        self.assertEqual(manifest.seeds_with_status("failed"), [])

    def test_output_is_sorted_json(self):
        manifest = RunManifest.in_dir(self.run_dir)
        manifest.set("b", 1)
        manifest.set("a", 2)
        text = manifest.path.read_text()
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {"a": 2, "b": 1})

    def test_unreadable_file_starts_empty(self):
        self.run_dir.mkdir(parents=True)
        (self.run_dir / MANIFEST_NAME).write_text("{not json")
        with self.assertLogs("run_manifest", level="WARNING"):
            manifest = RunManifest.in_dir(self.run_dir)
        self.assertIsNone(manifest.get("seeds"))


if __name__ == "__main__":
    unittest.main()
