// Frame-accurate playback over a bundle of still frames.
//
// The stimulus is a list of frames plus an exact rational fps; pacing must
// honor that fps so a 3.5x-retimed sequence really plays 3.5x longer. The
// player maps elapsed wall-clock time to a frame index each animation tick,
// drawing the latest due frame (indices never go backwards; late ticks may
// skip intermediate frames rather than stretch the clip).

import { SequenceManifest, manifestDurationMs, parseFps } from "./schema.js";

export interface Clock {
  now(): number; // milliseconds
  requestTick(callback: () => void): void;
}

export const realClock: Clock = {
  now: () => performance.now(),
  requestTick: (callback) => {
    if (typeof requestAnimationFrame === "function") {
      requestAnimationFrame(() => callback());
    } else {
      setTimeout(callback, 16);
    }
  },
};

export interface PlaybackReport {
  framesDrawn: number;
  firstIndex: number;
  lastIndex: number;
  durationMs: number;
}

export class FramePlayer {
  private readonly intervalMs: number;
  private readonly totalMs: number;

  constructor(
    private readonly manifest: SequenceManifest,
    private readonly draw: (index: number) => void,
    private readonly clock: Clock = realClock,
  ) {
    const { num, den } = parseFps(manifest.fps);
    this.intervalMs = (1000 * den) / num;
    this.totalMs = manifestDurationMs(manifest);
  }

  expectedDurationMs(): number {
    return this.totalMs;
  }

  play(): Promise<PlaybackReport> {
    const count = this.manifest.frame_count;
    const start = this.clock.now();
    let lastIndex = -1;
    let framesDrawn = 0;
    let firstIndex = -1;

    const drawDue = (elapsed: number) => {
      const due = Math.min(Math.floor(elapsed / this.intervalMs), count - 1);
      if (due > lastIndex) {
        lastIndex = due;
        framesDrawn += 1;
        if (firstIndex < 0) firstIndex = due;
        this.draw(due);
      }
    };

    return new Promise((resolve) => {
      const tick = () => {
        const elapsed = this.clock.now() - start;
        drawDue(elapsed);
        if (elapsed >= this.totalMs) {
          resolve({
            framesDrawn,
            firstIndex,
            lastIndex,
            durationMs: elapsed,
          });
          return;
        }
        this.clock.requestTick(tick);
      };
      drawDue(0);
      this.clock.requestTick(tick);
    });
  }
}
