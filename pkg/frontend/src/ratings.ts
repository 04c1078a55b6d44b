// Rating form state: three 7-point scores, none preselected, submit gated
// on completeness.

import {
  DIMENSIONS,
  Dimension,
  RatingPayload,
  SCALE_MAX,
  SCALE_MIN,
  TrialRef,
} from "./schema.js";

export const SCALE_VALUES: readonly number[] = Array.from(
  { length: SCALE_MAX - SCALE_MIN + 1 },
  (_, i) => SCALE_MIN + i,
);

export class RatingForm {
  private scores = new Map<Dimension, number>();

  constructor(readonly trial: TrialRef) {}

  setScore(dimension: Dimension, value: number): void {
    if (!DIMENSIONS.includes(dimension)) {
      throw new Error(`unknown dimension ${dimension}`);
    }
    if (!Number.isInteger(value) || value < SCALE_MIN || value > SCALE_MAX) {
      throw new Error(`score ${value} outside ${SCALE_MIN}..${SCALE_MAX}`);
    }
    this.scores.set(dimension, value);
  }

  score(dimension: Dimension): number | undefined {
    return this.scores.get(dimension);
  }

  isComplete(): boolean {
    return DIMENSIONS.every((dim) => this.scores.has(dim));
  }

  toPayload(
    participantId: string,
    presentationIndex: number,
    timestamp: string,
  ): RatingPayload {
    if (!this.isComplete()) {
      throw new Error("all three scores must be set before submission");
    }
    return {
      participant_id: participantId,
      pair_id: this.trial.pair_id,
      speed: this.trial.speed,
      presentation_index: presentationIndex,
      likability: this.scores.get("likability")!,
      aesthetic_pleasantness: this.scores.get("aesthetic_pleasantness")!,
      artistic_value: this.scores.get("artistic_value")!,
      timestamp,
    };
  }
}
