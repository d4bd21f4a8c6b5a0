import { ApiClient } from "./api.js";
import { display, displaySigned, tooltip } from "./format.js";
import { ATTRIBUTE_NAMES, Panel, type ViewState } from "./panel.js";

const API_BASE =
  new URLSearchParams(window.location.search).get("api") ?? "http://127.0.0.1:8000";

const panel = new Panel(new ApiClient(API_BASE));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const image = el<HTMLImageElement>("tile");
const predictionOut = el<HTMLElement>("prediction");
const seedInput = el<HTMLInputElement>("seed");
const targetInput = el<HTMLInputElement>("target");
const solveButton = el<HTMLButtonElement>("solve");
const applyButton = el<HTMLButtonElement>("apply");
const beforeImage = el<HTMLImageElement>("before");
const afterImage = el<HTMLImageElement>("after");
const achievedOut = el<HTMLElement>("achieved");
const barsHost = el<HTMLElement>("bars");
const sweepCanvas = el<HTMLCanvasElement>("sweep");
const sweepSelect = el<HTMLSelectElement>("sweep-attr");
const toastHost = el<HTMLElement>("toast");

const sliders = new Map<string, { range: HTMLInputElement; value: HTMLElement }>();
for (const name of ATTRIBUTE_NAMES) {
  sliders.set(name, {
    range: el<HTMLInputElement>(`knob-${name}`),
    value: el<HTMLElement>(`knob-${name}-value`),
  });
}

for (const name of ATTRIBUTE_NAMES) {
  const knob = sliders.get(name);
  if (!knob) continue;
  knob.range.addEventListener("input", () => {
    panel.onKnobChange(name, Number(knob.range.value));
  });
}

seedInput.addEventListener("change", () => panel.onSeedChange(Number(seedInput.value)));
targetInput.addEventListener("change", () => panel.onTargetChange(Number(targetInput.value)));
solveButton.addEventListener("click", () => void panel.solveCounterfactual());
applyButton.addEventListener("click", () => panel.applyCounterfactual());
sweepSelect.addEventListener("change", () => void panel.showSweep(Number(sweepSelect.value)));

function renderBars(state: ViewState): void {
  barsHost.replaceChildren();
  if (state.report === null) return;
  const max = Math.max(0.05, ...ATTRIBUTE_NAMES.map((n) => Math.abs(state.report!.deltas[n])));
  for (const name of ATTRIBUTE_NAMES) {
    const delta = state.report.deltas[name];
    const row = document.createElement("div");
    row.className = "bar-row";
    const label = document.createElement("span");
    label.className = "bar-label";
    label.textContent = name;
    const track = document.createElement("div");
    track.className = "bar-track";
    const bar = document.createElement("div");
    bar.className = `bar ${delta < 0 ? "neg" : "pos"}`;
    bar.style.width = `${(Math.abs(delta) / max) * 50}%`;
    bar.style[delta < 0 ? "right" : "left"] = "50%";
    track.appendChild(bar);
    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = displaySigned(delta);
    value.title = tooltip(delta);
    row.append(label, track, value);
    barsHost.appendChild(row);
  }
}

function renderSweep(state: ViewState): void {
  const ctx = sweepCanvas.getContext("2d");
  if (ctx === null) return;
  const { width, height } = sweepCanvas;
  ctx.clearRect(0, 0, width, height);
  if (state.sweep === null) return;
  const { grid, predictions, attr_name } = state.sweep;
  const lo = Math.min(...predictions);
  const hi = Math.max(...predictions);
  const pad = 28;
  const x = (g: number) => pad + g * (width - 2 * pad);
  const y = (p: number) =>
    height - pad - ((p - lo) / Math.max(hi - lo, 1e-9)) * (height - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, width - 2 * pad, height - 2 * pad);
  ctx.strokeStyle = "#2a6fdb";
  ctx.lineWidth = 2;
  ctx.beginPath();
  grid.forEach((g, i) => {
    const p = predictions[i];
    if (p === undefined) return;
    if (i === 0) ctx.moveTo(x(g), y(p));
    else ctx.lineTo(x(g), y(p));
  });
  ctx.stroke();

  // mark the current value of the swept attribute
  const current = state.attrs[attr_name];
  ctx.fillStyle = "#d33";
  ctx.beginPath();
  ctx.arc(x(current), pad, 4, 0, 2 * Math.PI);
  ctx.fill();

  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  ctx.fillText(`${attr_name}`, width / 2 - 20, height - 8);
  ctx.fillText(display(hi), 2, pad + 4);
  ctx.fillText(display(lo), 2, height - pad);
}

panel.subscribe((state) => {
  for (const name of ATTRIBUTE_NAMES) {
    const knob = sliders.get(name);
    if (!knob) continue;
    if (Number(knob.range.value) !== state.attrs[name]) {
      knob.range.value = String(state.attrs[name]);
    }
    knob.value.textContent = display(state.attrs[name]);
    knob.value.title = tooltip(state.attrs[name]);
  }
  seedInput.value = String(state.seed);
  if (state.imageDataUrl !== null) image.src = state.imageDataUrl;
  predictionOut.textContent = state.prediction === null ? "—" : display(state.prediction);
  predictionOut.title = state.prediction === null ? "" : tooltip(state.prediction);
  predictionOut.classList.toggle("busy", state.liveBusy);

  if (state.report !== null) {
    achievedOut.textContent = display(state.report.achieved_prediction);
    achievedOut.title = tooltip(state.report.achieved_prediction);
    applyButton.disabled = false;
  } else {
    applyButton.disabled = true;
  }
  if (state.beforeImageDataUrl !== null) beforeImage.src = state.beforeImageDataUrl;
  if (state.afterImageDataUrl !== null) afterImage.src = state.afterImageDataUrl;
  solveButton.disabled = state.solveBusy;
  renderBars(state);
  renderSweep(state);

  toastHost.textContent = state.toast ?? "";
  toastHost.classList.toggle("visible", state.toast !== null);
});

toastHost.addEventListener("click", () => panel.dismissToast());

// initial load
panel.flush();
void panel.refreshLive();
