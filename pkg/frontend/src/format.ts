/** Display rounding: two decimals in the reading, full precision for tooltips. */
export function display(value: number): string {
  if (!Number.isFinite(value)) return "—";
  return value.toFixed(2);
}

export function tooltip(value: number): string {
  if (!Number.isFinite(value)) return "not available";
  return String(value);
}

/** Signed form used by the delta bars, e.g. "+0.12" / "-0.30". */
export function displaySigned(value: number): string {
  if (!Number.isFinite(value)) return "—";
  const text = Math.abs(value).toFixed(2);
  return `${value < 0 ? "-" : "+"}${text}`;
}
