/** Client-side attribute shape checks; mirrors the hub's rules so invalid
 * entries are blocked inline before any network round-trip. */

import type { AttributeValue, FieldError } from "./types.js";

const FRACTION_BASES = new Set(["mass", "volume", "absolute"]);
const TYPES = new Set([
  "real_scalar", "uniform_real", "integer", "categorical", "text", "fraction",
]);

export function checkAttribute(value: AttributeValue): FieldError[] {
  const errors: FieldError[] = [];
  const err = (field: string, code: string, message: string) =>
    errors.push({ field, code, message });

  if (!TYPES.has(value.type)) {
    err("type", "BAD_TYPE", `unknown attribute type '${value.type}'`);
    return errors;
  }
  switch (value.type) {
    case "real_scalar":
      if (typeof value.value !== "number" || Number.isNaN(value.value)) {
        err("value", "MISSING_FIELD", "real_scalar requires a numeric value");
      }
      break;
    case "uniform_real":
      if (typeof value.lower_bound !== "number" || typeof value.upper_bound !== "number") {
        err("bounds", "MISSING_FIELD", "uniform_real requires lower and upper bounds");
      } else if (value.lower_bound > value.upper_bound) {
        err("bounds", "BOUNDS_ORDER",
            `lower bound ${value.lower_bound} exceeds upper bound ${value.upper_bound}`);
      }
      break;
    case "integer":
      if (typeof value.value !== "number" || !Number.isInteger(value.value)) {
        err("value", "MISSING_FIELD", "integer requires a whole-number value");
      }
      break;
    case "categorical":
    case "text":
      if (typeof value.value !== "string") {
        err("value", "MISSING_FIELD", `${value.type} requires a text value`);
      }
      break;
    case "fraction":
      if (!value.basis || !FRACTION_BASES.has(value.basis)) {
        err("basis", "BAD_BASIS", "fraction basis must be mass, volume or absolute");
      }
      if (typeof value.value !== "number" || Number.isNaN(value.value)) {
        err("value", "MISSING_FIELD", "fraction requires a numeric value");
      } else if ((value.basis === "mass" || value.basis === "volume")
                 && (value.value < 0 || value.value > 1)) {
        err("value", "FRACTION_RANGE",
            `${value.basis} fraction must lie in [0, 1], got ${value.value}`);
      }
      break;
  }
  if (value.units !== undefined && (value.units === "" || value.units.trim() !== value.units)) {
    err("units", "EMPTY_UNITS", "units must be a non-empty token");
  }
  return errors;
}
