import { describe, expect, it } from "vitest";

import { checkAttribute } from "../src/attributes.js";

describe("inline attribute checks", () => {
  it("accepts a uniform_real with ordered bounds", () => {
    expect(checkAttribute({ type: "uniform_real", units: "celsius",
                            lower_bound: 450.5, upper_bound: 451.5 })).toEqual([]);
  });

  it("rejects inverted bounds", () => {
    const errors = checkAttribute({ type: "uniform_real", units: "celsius",
                                    lower_bound: 451.5, upper_bound: 450.5 });
    expect(errors.map(e => e.code)).toEqual(["BOUNDS_ORDER"]);
  });

  it("accepts a 0.3 mass fraction and rejects 1.2", () => {
    expect(checkAttribute({ type: "fraction", basis: "mass", value: 0.3 })).toEqual([]);
    const errors = checkAttribute({ type: "fraction", basis: "mass", value: 1.2 });
    expect(errors.map(e => e.code)).toEqual(["FRACTION_RANGE"]);
  });

  it("absolute fractions are unbounded", () => {
    expect(checkAttribute({ type: "fraction", basis: "absolute", value: 12.5 })).toEqual([]);
  });

  it("rejects unknown basis and empty units", () => {
    expect(checkAttribute({ type: "fraction", basis: "parts" as never, value: 0.5 })
      .map(e => e.code)).toContain("BAD_BASIS");
    expect(checkAttribute({ type: "real_scalar", value: 1, units: "" })
      .map(e => e.code)).toContain("EMPTY_UNITS");
  });

  it("requires numeric values where numbers are expected", () => {
    expect(checkAttribute({ type: "real_scalar", value: "warm" })
      .map(e => e.code)).toContain("MISSING_FIELD");
    expect(checkAttribute({ type: "integer", value: 2.5 })
      .map(e => e.code)).toContain("MISSING_FIELD");
  });
});
