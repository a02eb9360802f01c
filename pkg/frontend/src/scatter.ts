// Sample payload rendering.  Desk-scale payloads are 2-D world
// coordinates, drawn as a quadrant scatter; the renderer is pluggable so a
// deployment with real images can swap in an <img> renderer instead.

import type { TaskPayload } from "./types.js";

export type PayloadRenderer = (payload: TaskPayload) => string;

export interface ScatterOptions {
  size?: number;
  extent?: number;
}

export const renderScatterSvg: PayloadRenderer = (
  payload: TaskPayload,
  options: ScatterOptions = {},
): string => {
  const size = options.size ?? 240;
  const extent = options.extent ?? 4;
  const half = size / 2;
  const [x, y] = payload.coords ?? [0, 0];
  const px = half + ((x ?? 0) / extent) * half;
  const py = half - ((y ?? 0) / extent) * half;
  const label = payload.s_plus
    ? `${payload.class_R ?? "sample"} / ${payload.group ?? ""}: ${payload.s_plus}`
    : "sample";
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${size} ${size}" width="${size}" height="${size}" role="img" aria-label="${label}">`,
    // target quadrant: reference class (left) with target attribute (top)
    `<rect x="0" y="0" width="${half}" height="${half}" fill="#dcefdc"/>`,
    `<rect x="0" y="0" width="${size}" height="${size}" fill="none" stroke="#888"/>`,
    `<line x1="${half}" y1="0" x2="${half}" y2="${size}" stroke="#bbb"/>`,
    `<line x1="0" y1="${half}" x2="${size}" y2="${half}" stroke="#bbb"/>`,
    `<circle cx="${px.toFixed(2)}" cy="${py.toFixed(2)}" r="6" fill="#d9480f"/>`,
    `<title>${label}</title>`,
    `</svg>`,
  ].join("");
};
