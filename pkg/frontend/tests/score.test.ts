import { describe, expect, it } from "vitest";

import { answerScore, meanScore } from "../src/score.js";

describe("answer scoring", () => {
  it("maps yes/somewhat/no to 1/0.5/0", () => {
    expect(answerScore("yes")).toBe(1.0);
    expect(answerScore("somewhat")).toBe(0.5);
    expect(answerScore("no")).toBe(0.0);
  });

  it("rejects anything else", () => {
    expect(() => answerScore("maybe")).toThrow(/not a binary answer/);
  });

  it("averages a mixed answer set", () => {
    expect(meanScore(["yes", "somewhat", "no"])).toBe(0.5);
    expect(meanScore(["yes", "yes", "somewhat", "no"])).toBe(0.625);
    expect(() => meanScore([])).toThrow(/no answers/);
  });
});
