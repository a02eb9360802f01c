import { describe, expect, it } from "vitest";

import { renderScatterSvg } from "../src/scatter.js";

describe("payload rendering", () => {
  it("draws the sample point at scaled coordinates", () => {
    const svg = renderScatterSvg({ coords: [0, 0] });
    expect(svg).toContain("<svg");
    expect(svg).toContain('cx="120.00"');
    expect(svg).toContain('cy="120.00"');
  });

  it("places target-region points in the upper-left quadrant", () => {
    const svg = renderScatterSvg({ coords: [-2, 2] });
    const cx = Number(/cx="([\d.]+)"/.exec(svg)?.[1]);
    const cy = Number(/cy="([\d.]+)"/.exec(svg)?.[1]);
    expect(cx).toBeLessThan(120);
    expect(cy).toBeLessThan(120);
  });

  it("labels the figure with class and attribute", () => {
    const svg = renderScatterSvg({
      coords: [1, 1],
      class_R: "Blue Jay",
      group: "crown color",
      s_plus: "yellow",
    });
    expect(svg).toContain("Blue Jay / crown color: yellow");
  });
});
