import init, { referenceParams, outline, Surrogate } from "./pkg/tonewood_web.js";

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

let surrogate = null;
let reference = null;
let params = null;
let lastResult = null;

function pathOf(points) {
  return points.map(([x, y], i) => `${i ? "L" : "M"}${x} ${y}`).join(" ") + "Z";
}

function drawBars(freqs) {
  const svg = $("bars");
  const max = Math.max(...freqs) * 1.05;
  const w = 420 / freqs.length;
  svg.innerHTML = freqs.map((f, i) => {
    const h = (f / max) * 200;
    return `<rect x="${i * w + 4}" y="${210 - h}" width="${w - 8}" height="${h}"></rect>` +
      `<text x="${i * w + w / 2}" y="${205 - h}" font-size="10" text-anchor="middle">${f.toFixed(0)}</text>`;
  }).join("");
}

function drawTrace(trace) {
  const svg = $("trace");
  const logs = trace.map((v) => Math.log10(Math.max(v, 1e-16)));
  const lo = Math.min(...logs), hi = Math.max(...logs);
  const pts = logs.map((v, i) => `${(i / (logs.length - 1)) * 300},${75 - ((v - lo) / (hi - lo || 1)) * 70}`);
  svg.innerHTML = `<polyline fill="none" stroke="#36c" points="${pts.join(" ")}"></polyline>`;
}

function refresh() {
  const json = JSON.stringify(params);
  try {
    $("current").setAttribute("d", pathOf(JSON.parse(outline(json, 256))));
    if (surrogate) {
      const p = JSON.parse(surrogate.predict(json));
      $("f52").textContent = p.f52.toFixed(3);
      $("box").textContent = p.in_training_box ? "" : "(outside training box)";
      drawBars(p.freqs_hz);
    }
    status("");
  } catch (e) {
    status(String(e));
  }
}

function buildSliders() {
  const host = $("sliders");
  host.innerHTML = "";
  params.p.forEach((v, i) => {
    const label = document.createElement("label");
    label.textContent = `p${i + 1}`;
    const input = document.createElement("input");
    Object.assign(input, { type: "range", min: 0.8 * reference.p[i], max: 1.2 * reference.p[i], step: 0.005, value: v });
    input.addEventListener("input", () => { params.p[i] = Number(input.value); refresh(); });
    label.appendChild(input);
    host.appendChild(label);
  });
}

function reset() {
  params = structuredClone(reference);
  $("thickness").value = 1;
  $("optimized").setAttribute("d", "");
  buildSliders();
  refresh();
}

async function main() {
  await init();
  reference = JSON.parse(referenceParams());
  $("reference").setAttribute("d", pathOf(JSON.parse(outline(JSON.stringify(reference), 256))));
  try {
    const res = await fetch("model.json");
    if (!res.ok) throw new Error(`model.json: HTTP ${res.status}`);
    surrogate = new Surrogate(await res.text());
  } catch (e) {
    status(`No surrogate loaded (${e.message}); outline editing only.`);
  }
  $("thickness").addEventListener("input", (ev) => {
    params.t = reference.t.map((t) => t * Number(ev.target.value));
    refresh();
  });
  $("reset").addEventListener("click", reset);
  $("optimize").addEventListener("click", () => {
    if (!surrogate) return;
    try {
      lastResult = JSON.parse(surrogate.optimizeRatio(JSON.stringify(params), Number($("alpha").value)));
      $("optimized").setAttribute("d", pathOf(lastResult.boundary));
      drawTrace(lastResult.trace);
      $("adopt").disabled = false;
      status(`f5/f2 → ${lastResult.f52.toFixed(3)} after ${lastResult.evaluations} evaluations`);
    } catch (e) {
      status(String(e));
    }
  });
  $("adopt").addEventListener("click", () => {
    if (!lastResult) return;
    params = lastResult.params;
    buildSliders();
    refresh();
  });
  reset();
}

main();
