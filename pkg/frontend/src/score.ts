// Answer scoring, mirrored from the aggregation stage: yes = 1,
// somewhat = 0.5, no = 0.

import type { BinaryAnswer } from "./types.js";

export const ANSWER_SCORES: Record<BinaryAnswer, number> = {
  yes: 1.0,
  somewhat: 0.5,
  no: 0.0,
};

export function answerScore(answer: string): number {
  if (!(answer in ANSWER_SCORES)) {
    throw new Error(`not a binary answer: ${answer}`);
  }
  return ANSWER_SCORES[answer as BinaryAnswer];
}

export function meanScore(answers: string[]): number {
  if (answers.length === 0) {
    throw new Error("no answers to average");
  }
  const total = answers.reduce((acc, a) => acc + answerScore(a), 0);
  return total / answers.length;
}
