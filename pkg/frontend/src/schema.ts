// Types and validation mirroring the study service's wire formats.

export const PAIRS = ["abstract", "portrait"] as const;
export const SPEEDS = ["slow", "fast"] as const;
export const DIMENSIONS = [
  "likability",
  "aesthetic_pleasantness",
  "artistic_value",
] as const;

export type PairId = (typeof PAIRS)[number];
export type Speed = (typeof SPEEDS)[number];
export type Dimension = (typeof DIMENSIONS)[number];

export const SCALE_MIN = 1;
export const SCALE_MAX = 7;
export const NEUTRAL = 4;

export const PARTICIPANT_ID_RE = /^[A-Za-z0-9_-]+$/;

export interface TrialRef {
  pair_id: PairId;
  speed: Speed;
  stimulus: string;
}

export interface SessionPlan {
  participant_id: string;
  trials: TrialRef[];
}

export interface SequenceManifest {
  fps: string; // exact rational "num/den"
  frame_count: number;
  retime_factor: string;
  recipe_hash: string | null;
}

export interface RatingPayload {
  participant_id: string;
  pair_id: string;
  speed: string;
  presentation_index: number;
  likability: number;
  aesthetic_pleasantness: number;
  artistic_value: number;
  timestamp: string;
}

function isScore(value: unknown): boolean {
  return (
    typeof value === "number" &&
    Number.isInteger(value) &&
    value >= SCALE_MIN &&
    value <= SCALE_MAX
  );
}

/** Problems with a rating payload; empty array means it matches the service schema. */
export function validateRating(payload: RatingPayload): string[] {
  const problems: string[] = [];
  if (!PARTICIPANT_ID_RE.test(payload.participant_id)) {
    problems.push(`participant_id ${JSON.stringify(payload.participant_id)} invalid`);
  }
  if (!(PAIRS as readonly string[]).includes(payload.pair_id)) {
    problems.push(`unknown pair_id ${payload.pair_id}`);
  }
  if (!(SPEEDS as readonly string[]).includes(payload.speed)) {
    problems.push(`unknown speed ${payload.speed}`);
  }
  if (
    !Number.isInteger(payload.presentation_index) ||
    payload.presentation_index < 0 ||
    payload.presentation_index > 3
  ) {
    problems.push(`presentation_index ${payload.presentation_index} outside 0..3`);
  }
  for (const dim of DIMENSIONS) {
    if (!isScore(payload[dim])) {
      problems.push(`${dim} score ${payload[dim]} outside ${SCALE_MIN}..${SCALE_MAX}`);
    }
  }
  if (typeof payload.timestamp !== "string" || payload.timestamp.length === 0) {
    problems.push("timestamp missing");
  }
  return problems;
}

export function assertPlan(data: unknown): SessionPlan {
  const plan = data as SessionPlan;
  if (
    !plan ||
    typeof plan.participant_id !== "string" ||
    !Array.isArray(plan.trials) ||
    plan.trials.length !== 4
  ) {
    throw new Error("malformed session plan");
  }
  for (const trial of plan.trials) {
    if (
      !(PAIRS as readonly string[]).includes(trial.pair_id) ||
      !(SPEEDS as readonly string[]).includes(trial.speed) ||
      typeof trial.stimulus !== "string"
    ) {
      throw new Error("malformed trial in session plan");
    }
  }
  return plan;
}

export function assertManifest(data: unknown): SequenceManifest {
  const manifest = data as SequenceManifest;
  if (
    !manifest ||
    typeof manifest.fps !== "string" ||
    !Number.isInteger(manifest.frame_count) ||
    manifest.frame_count < 1
  ) {
    throw new Error("malformed sequence manifest");
  }
  parseFps(manifest.fps);
  return manifest;
}

export function parseFps(text: string): { num: number; den: number } {
  const m = /^(\d+)\/(\d+)$/.exec(text);
  if (!m) throw new Error(`fps is not a rational: ${text}`);
  const num = Number(m[1]);
  const den = Number(m[2]);
  if (num <= 0 || den <= 0) throw new Error(`fps must be positive: ${text}`);
  return { num, den };
}

/** Nominal playback duration of a sequence in milliseconds. */
export function manifestDurationMs(manifest: SequenceManifest): number {
  const { num, den } = parseFps(manifest.fps);
  return (manifest.frame_count * 1000 * den) / num;
}
