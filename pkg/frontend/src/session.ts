// Session state machine.
//
// The served plan is the single source of trial order: trials play exactly
// in plan order, and presentation_index is the trial's position in the
// plan. Both videos of a pair are shown before that pair's ratings are
// finalized, supporting rating each video relative to the other. A failed
// submission throws without touching entered scores, so the caller can
// retry; a 409 marks the trial as already submitted.

import { SubmitOutcome } from "./api.js";
import { PlaybackReport } from "./player.js";
import { RatingForm } from "./ratings.js";
import {
  RatingPayload,
  SequenceManifest,
  SessionPlan,
  TrialRef,
} from "./schema.js";

/** The slice of the service API the session needs; ApiClient satisfies it. */
export interface StudyApi {
  fetchPlan(participantId: string): Promise<SessionPlan>;
  fetchManifest(trial: TrialRef): Promise<SequenceManifest>;
  submitRating(payload: RatingPayload): Promise<SubmitOutcome>;
}

export interface Playable {
  play(): Promise<PlaybackReport>;
}

export type PlayerFactory = (
  trial: TrialRef,
  manifest: SequenceManifest,
) => Playable | Promise<Playable>;

export interface PairBlock {
  pairId: string;
  trials: TrialRef[];
  planIndices: number[];
  forms: RatingForm[];
  submitted: boolean[];
  reports: (PlaybackReport | null)[];
}

export class Session {
  plan: SessionPlan | null = null;
  pairs: PairBlock[] = [];

  constructor(
    private readonly api: StudyApi,
    private readonly playerFactory: PlayerFactory,
    private readonly now: () => string = () => new Date().toISOString(),
  ) {}

  async begin(participantId: string): Promise<SessionPlan> {
    const plan = await this.api.fetchPlan(participantId);
    this.plan = plan;
    this.pairs = [];
    for (const [index, trial] of plan.trials.entries()) {
      const last = this.pairs[this.pairs.length - 1];
      if (!last || last.pairId !== trial.pair_id) {
        this.pairs.push({
          pairId: trial.pair_id,
          trials: [],
          planIndices: [],
          forms: [],
          submitted: [],
          reports: [],
        });
      }
      const block = this.pairs[this.pairs.length - 1];
      block.trials.push(trial);
      block.planIndices.push(index);
      block.forms.push(new RatingForm(trial));
      block.submitted.push(false);
      block.reports.push(null);
    }
    if (this.pairs.length !== 2 || this.pairs.some((p) => p.trials.length !== 2)) {
      throw new Error("plan did not group into two pairs of two trials");
    }
    return plan;
  }

  /** Play both videos of one pair, in plan order. */
  async playPair(blockIndex: number): Promise<PlaybackReport[]> {
    const block = this.block(blockIndex);
    const reports: PlaybackReport[] = [];
    for (let i = 0; i < block.trials.length; i++) {
      const trial = block.trials[i];
      const manifest = await this.api.fetchManifest(trial);
      const player = await this.playerFactory(trial, manifest);
      const report = await player.play();
      block.reports[i] = report;
      reports.push(report);
    }
    return reports;
  }

  pairReadyToSubmit(blockIndex: number): boolean {
    return this.block(blockIndex).forms.every((f) => f.isComplete());
  }

  /**
   * Submit every not-yet-submitted rating of the pair. Network errors
   * propagate with the forms intact; trials already accepted in an earlier
   * attempt are not re-posted.
   */
  async submitPair(blockIndex: number): Promise<SubmitOutcome[]> {
    const block = this.block(blockIndex);
    if (!this.plan) throw new Error("session has not begun");
    if (!this.pairReadyToSubmit(blockIndex)) {
      throw new Error("all three scores must be set for both videos");
    }
    const outcomes: SubmitOutcome[] = [];
    for (let i = 0; i < block.trials.length; i++) {
      if (block.submitted[i]) {
        outcomes.push("created");
        continue;
      }
      const payload = block.forms[i].toPayload(
        this.plan.participant_id,
        block.planIndices[i],
        this.now(),
      );
      const outcome = await this.api.submitRating(payload);
      block.submitted[i] = true;
      outcomes.push(outcome);
    }
    return outcomes;
  }

  get isComplete(): boolean {
    return (
      this.pairs.length === 2 &&
      this.pairs.every((block) => block.submitted.every(Boolean))
    );
  }

  private block(blockIndex: number): PairBlock {
    const block = this.pairs[blockIndex];
    if (!block) throw new Error(`no pair block ${blockIndex}`);
    return block;
  }
}
