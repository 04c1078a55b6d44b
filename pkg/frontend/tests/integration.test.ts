// Live round-trip against the real Python study service: builds stimuli,
// boots `artstudio serve`, drives a complete session through the production
// client/session/player code (virtual clock), then verifies the exported
// CSV ingests cleanly on the analysis side.

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { FramePlayer, PlaybackReport } from "../src/player.js";
import { Session } from "../src/session.js";
import { DIMENSIONS, SequenceManifest, manifestDurationMs } from "../src/schema.js";
import { VirtualClock } from "./testutil.js";

const BUILD_FIXTURES = `
import json, sys
import numpy as np
from pathlib import Path
from artstudio.motionlab import FrameSequence, RetimeSpec, retime, write_sequence

root = Path(sys.argv[1])
rng = np.random.default_rng(12)
stimuli = {}
for pair in ("abstract", "portrait"):
    frames = [rng.integers(0, 256, (24, 24, 3), dtype=np.uint8) for _ in range(10)]
    fast = FrameSequence(frames, fps=10)          # 1.0 s
    write_sequence(fast, root / f"{pair}_fast")
    write_sequence(retime(fast, RetimeSpec(factor="7/2")), root / f"{pair}_slow")
    stimuli[pair] = {"fast": f"{pair}_fast", "slow": f"{pair}_slow"}
config = {"stimuli": stimuli, "study_seed": 5, "ratings_path": "ratings.csv"}
(root / "study.json").write_text(json.dumps(config))
print("fixtures ready")
`;

const CHECK_INGEST = `
import sys
from artstudio.psychstats import ingest_ratings
result = ingest_ratings(sys.argv[1])
assert result.rejected == [], result.rejected
assert result.excluded == set(), result.excluded
print(len(result.records))
`;

let workdir: string;
let server: ChildProcess;
let base: string;

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "rater-ui-"));
  execFileSync("python3", ["-c", BUILD_FIXTURES, workdir]);
  server = spawn("python3", [
    "-m", "artstudio.cli", "serve",
    "--config", join(workdir, "study.json"),
    "--host", "127.0.0.1", "--port", "0",
  ]);
  base = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error(`service did not start: ${buffer}`)), 30000);
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const m = /listening on (http:\/\/[\d.]+:\d+)/.exec(buffer);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    server.stderr!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
    });
    server.on("exit", (code: number | null) =>
      reject(new Error(`service exited early (${code}): ${buffer}`)));
  });
});

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

describe("live session round trip", () => {
  it("completes a session; the exported CSV ingests with no errors", async () => {
    const api = new ApiClient(base);
    const reports = new Map<string, PlaybackReport>();
    const session = new Session(api, (trial, manifest) => {
      return new FramePlayer(manifest, () => {}, new VirtualClock());
    });

    const plan = await session.begin("P01");
    expect(plan.trials).toHaveLength(4);

    for (let blockIndex = 0; blockIndex < session.pairs.length; blockIndex++) {
      const block = session.pairs[blockIndex];
      const blockReports = await session.playPair(blockIndex);
      block.trials.forEach((trial, i) =>
        reports.set(`${trial.pair_id}/${trial.speed}`, blockReports[i]),
      );
      for (const form of block.forms) {
        for (const dim of DIMENSIONS) {
          form.setScore(dim, form.trial.speed === "slow" ? 6 : 4);
        }
      }
      const outcomes = await session.submitPair(blockIndex);
      expect(outcomes).toEqual(["created", "created"]);
    }
    expect(session.isComplete).toBe(true);

    const csv = await api.exportCsv();
    const lines = csv.trim().split(/\r?\n/);
    expect(lines).toHaveLength(5); // header + 4 ratings
    expect(lines[0]).toBe(
      "participant_id,pair_id,speed,presentation_index,likability," +
        "aesthetic_pleasantness,artistic_value,timestamp_iso8601",
    );
    const count = execFileSync(
      "python3", ["-c", CHECK_INGEST, join(workdir, "ratings.csv")],
    ).toString().trim();
    expect(count).toBe("4");

    // pacing: the slow version runs 3.5x the fast version, within 2%
    for (const pair of ["abstract", "portrait"]) {
      const fast = reports.get(`${pair}/fast`)!;
      const slow = reports.get(`${pair}/slow`)!;
      const ratio = slow.durationMs / fast.durationMs;
      expect(Math.abs(ratio - 3.5) / 3.5).toBeLessThan(0.02);
    }
  });

  it("serves manifests whose nominal durations encode the 3.5x retime", async () => {
    const api = new ApiClient(base);
    const plan = await api.fetchPlan("P02");
    const byKey = new Map<string, SequenceManifest>(
      await Promise.all(
        plan.trials.map(async (t) => {
          const manifest = await api.fetchManifest(t);
          return [`${t.pair_id}/${t.speed}`, manifest] as [string, SequenceManifest];
        }),
      ),
    );
    for (const pair of ["abstract", "portrait"]) {
      const fast = byKey.get(`${pair}/fast`)!;
      const slow = byKey.get(`${pair}/slow`)!;
      expect(slow.retime_factor).toBe("7/2");
      expect(manifestDurationMs(slow) / manifestDurationMs(fast)).toBe(3.5);
    }
  });

  it("reports duplicates without losing the original rating", async () => {
    const api = new ApiClient(base);
    const plan = await api.fetchPlan("P01");
    const trial = plan.trials[0];
    const outcome = await api.submitRating({
      participant_id: "P01",
      pair_id: trial.pair_id,
      speed: trial.speed,
      presentation_index: 0,
      likability: 1,
      aesthetic_pleasantness: 1,
      artistic_value: 1,
      timestamp: new Date().toISOString(),
    });
    expect(outcome).toBe("duplicate");
    const csv = await api.exportCsv();
    expect(csv.trim().split(/\r?\n/)).toHaveLength(5);
  });

  it("rejects out-of-schema ratings with machine-readable reasons", async () => {
    const resp = await fetch(`${base}/api/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        participant_id: "P03",
        pair_id: "abstract",
        speed: "slow",
        presentation_index: 0,
        likability: 9,
        aesthetic_pleasantness: 5,
        artistic_value: 5,
      }),
    });
    expect(resp.status).toBe(400);
    const body = (await resp.json()) as { error: string };
    expect(body.error).toContain("likability");
  });
});
