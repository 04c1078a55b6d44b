// Browser entry point: wires the session state machine to the DOM.
//
// Flow per pair: full-screen playback of both videos (frames preloaded, so
// pacing is not network-bound), then the two rating panels side by side,
// then a gated submit. Failed submissions keep entered scores and offer a
// retry; duplicates are reported as already submitted.

import { ApiClient } from "./api.js";
import { FramePlayer, realClock } from "./player.js";
import { Session } from "./session.js";
import { SequenceManifest, TrialRef } from "./schema.js";
import { ratingPanel, submitGate } from "./widgets.js";

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function screen(...children: (HTMLElement | string)[]): HTMLElement {
  const root = document.getElementById("app")!;
  root.replaceChildren();
  const wrap = el("div", "screen");
  for (const child of children) {
    wrap.append(typeof child === "string" ? el("p", undefined, child) : child);
  }
  root.appendChild(wrap);
  return wrap;
}

async function preloadFrames(trial: TrialRef, manifest: SequenceManifest): Promise<HTMLImageElement[]> {
  const frames: Promise<HTMLImageElement>[] = [];
  for (let i = 0; i < manifest.frame_count; i++) {
    frames.push(
      new Promise((resolve, reject) => {
        const img = new Image();
        img.onload = () => resolve(img);
        img.onerror = () => reject(new Error(`failed to load frame ${i}`));
        img.src = api.frameUrl(trial, i);
      }),
    );
  }
  return Promise.all(frames);
}

function makeCanvasPlayerFactory(canvas: HTMLCanvasElement) {
  return async (trial: TrialRef, manifest: SequenceManifest) => {
    const frames = await preloadFrames(trial, manifest);
    canvas.width = frames[0].naturalWidth;
    canvas.height = frames[0].naturalHeight;
    const ctx = canvas.getContext("2d")!;
    return new FramePlayer(
      manifest,
      (index) => ctx.drawImage(frames[index], 0, 0),
      realClock,
    );
  };
}

async function runSession(participantId: string): Promise<void> {
  const canvas = el("canvas", "stimulus-canvas");
  const status = el("p", "status");
  const session = new Session(api, makeCanvasPlayerFactory(canvas));

  await session.begin(participantId);
  for (let blockIndex = 0; blockIndex < session.pairs.length; blockIndex++) {
    const block = session.pairs[blockIndex];

    screen(
      el("h2", undefined, `Video pair ${blockIndex + 1} of ${session.pairs.length}`),
      "You will see two versions of the same video. Please watch both; " +
        "afterwards, rate each version with respect to the other.",
      canvas,
      status,
    );
    status.textContent = "Playing both versions ...";
    await session.playPair(blockIndex);
    status.textContent = "";

    await new Promise<void>((resolve) => {
      const panels = block.trials.map((trial, i) =>
        ratingPanel(
          `Version ${i + 1} (${trial.speed})`,
          `pair${blockIndex}-video${i}`,
          block.forms[i],
          () => gate.refresh(),
        ),
      );
      const note = el("p", "status");
      const gate = submitGate("Submit ratings", block.forms, async () => {
        note.textContent = "Submitting ...";
        try {
          const outcomes = await session.submitPair(blockIndex);
          note.textContent = outcomes.includes("duplicate")
            ? "Some ratings were already submitted."
            : "Ratings recorded.";
          resolve();
        } catch (err) {
          note.textContent = `Submission failed (${String(err)}). ` +
            "Your scores are kept; press Submit to retry.";
        }
      });
      screen(
        el("h2", undefined, `Rate pair ${blockIndex + 1}`),
        ...panels,
        gate.button,
        note,
      );
    });
  }
  screen(
    el("h2", undefined, "Session complete"),
    "Thank you! All ratings have been recorded. You may close this window.",
  );
}

function showStart(): void {
  const input = el("input") as HTMLInputElement;
  input.placeholder = "participant id (letters, digits, _ or -)";
  const start = el("button", "submit-button", "Start session") as HTMLButtonElement;
  const note = el("p", "status");
  start.addEventListener("click", async () => {
    try {
      start.disabled = true;
      await runSession(input.value.trim());
    } catch (err) {
      note.textContent = `Could not run session: ${String(err)}`;
      start.disabled = false;
    }
  });
  screen(el("h1", undefined, "Art video rating study"), input, start, note);
}

showStart();
