import { describe, expect, it } from "vitest";

import { parseCsv, SCHEMA_LINE } from "../src/csv.js";
import { buildFigure, guideSlope, lineFit } from "../src/model.js";

function syntheticH2(): string {
  // errors exactly H^2 over five dyadic levels
  const lines = [SCHEMA_LINE, "H,p,a_err_rel"];
  for (let e = 1; e <= 5; e++) {
    const H = 2 ** -e;
    lines.push(`${H},0,${H * H}`);
  }
  return lines.join("\n") + "\n";
}

describe("buildFigure", () => {
  it("puts exact-H^2 data collinear with the order-2 guide", () => {
    const fig = buildFigure(parseCsv(syntheticH2()), "H", "a_err_rel");
    expect(fig.series).toHaveLength(1);
    const fit = lineFit(fig.series[0].points);
    expect(fit.r2).toBeGreaterThan(0.9999);
    const guide2 = fig.guides.find((g) => g.order === 2)!;
    expect(fit.slope).toBeCloseTo(guide2.slope, 9);
    // and clearly off the order-3 guide
    const guide3 = fig.guides.find((g) => g.order === 3)!;
    expect(Math.abs(fit.slope - guide3.slope)).toBeGreaterThan(
      0.2 * Math.abs(guide2.slope),
    );
  });

  it("halves and negates guide orders on the dofs axis", () => {
    expect(guideSlope(2, "H")).toBe(2);
    expect(guideSlope(2, "dofs")).toBe(-1);
    expect(guideSlope(4, "tau")).toBe(4);
  });

  it("groups series by p when present", () => {
    const text = `${SCHEMA_LINE}\nH,p,a_err_rel\n0.5,0,0.1\n0.25,0,0.02\n0.5,1,0.05\n0.25,1,0.004\n`;
    const fig = buildFigure(parseCsv(text), "H", "a_err_rel");
    expect(fig.series.map((s) => s.label)).toEqual(["p=0", "p=1"]);
    // within a series, points ordered by increasing x
    for (const s of fig.series) {
      expect(s.points[0].x).toBeLessThan(s.points[1].x);
    }
  });

  it("skips rows with blank cells and rejects unknown columns", () => {
    const text = `${SCHEMA_LINE}\nH,a_err_rel\n0.5,\n0.25,0.02\n0.125,0.005\n`;
    const fig = buildFigure(parseCsv(text), "H", "a_err_rel");
    expect(fig.series[0].points).toHaveLength(2);
    expect(() => buildFigure(parseCsv(text), "dofs", "a_err_rel")).toThrow(/no 'dofs'/);
    expect(() => buildFigure(parseCsv(text), "H", "err_rel")).toThrow(/no 'err_rel'/);
  });

  it("rejects non-positive values on log axes", () => {
    const text = `${SCHEMA_LINE}\nH,a_err_rel\n0.5,0\n`;
    expect(() => buildFigure(parseCsv(text), "H", "a_err_rel")).toThrow(/positive/);
  });
});
