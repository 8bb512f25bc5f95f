/**
 * Deterministic SVG rendering of a figure model: fixed canvas, fixed
 * palette, numbers printed with fixed precision, no timestamps — the same
 * model always yields the same bytes.
 */

import { FigureModel } from "./model.js";

const PALETTE = ["#1b6ca8", "#c1453a", "#3a8f4f", "#8054a8", "#b0781f", "#4f4f4f"];

const fmt = (v: number) => v.toPrecision(6).replace(/\.?0+$/, "");

export function renderSvg(model: FigureModel): string {
  const { width, height, margin } = model;
  const x0 = margin.left;
  const y0 = margin.top;
  const x1 = width - margin.right;
  const y1 = height - margin.bottom;
  const parts: string[] = [];

  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect x="0" y="0" width="${width}" height="${height}" fill="#ffffff"/>`,
    `<rect x="${x0}" y="${y0}" width="${x1 - x0}" height="${y1 - y0}" ` +
      `fill="none" stroke="#333333" stroke-width="1"/>`,
  );

  for (const t of model.xTicks) {
    parts.push(
      `<line x1="${fmt(t.pos)}" y1="${y1}" x2="${fmt(t.pos)}" y2="${y1 + 5}" stroke="#333333"/>`,
      `<text x="${fmt(t.pos)}" y="${y1 + 18}" text-anchor="middle" font-size="11">${t.label}</text>`,
    );
  }
  for (const t of model.yTicks) {
    parts.push(
      `<line x1="${x0 - 5}" y1="${fmt(t.pos)}" x2="${x0}" y2="${fmt(t.pos)}" stroke="#333333"/>`,
      `<text x="${x0 - 8}" y="${fmt(t.pos + 4)}" text-anchor="end" font-size="11">${t.label}</text>`,
    );
  }
  parts.push(
    `<text x="${(x0 + x1) / 2}" y="${height - 12}" text-anchor="middle" font-size="13">${model.xLabel}</text>`,
    `<text x="16" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" ` +
      `transform="rotate(-90 16 ${(y0 + y1) / 2})">${model.yLabel}</text>`,
  );

  model.guides.forEach((g) => {
    parts.push(
      `<line x1="${fmt(g.x1)}" y1="${fmt(g.y1)}" x2="${fmt(g.x2)}" y2="${fmt(g.y2)}" ` +
        `stroke="#999999" stroke-width="1" stroke-dasharray="5,4"/>`,
      `<text x="${fmt(g.x2 + 4)}" y="${fmt(g.y2 + 4)}" font-size="10" fill="#777777">O(${g.order})</text>`,
    );
  });

  model.series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const path = s.points.map((p) => `${fmt(p.x)},${fmt(p.y)}`).join(" ");
    parts.push(`<polyline points="${path}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
    for (const p of s.points) {
      parts.push(`<circle cx="${fmt(p.x)}" cy="${fmt(p.y)}" r="3.5" fill="${color}"/>`);
    }
    if (s.label !== "") {
      const ly = y0 + 16 + 16 * i;
      parts.push(
        `<line x1="${x1 - 90}" y1="${ly - 4}" x2="${x1 - 70}" y2="${ly - 4}" stroke="${color}" stroke-width="1.5"/>`,
        `<text x="${x1 - 64}" y="${ly}" font-size="11">${s.label}</text>`,
      );
    }
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
