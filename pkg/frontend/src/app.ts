import { loadAsset, fetchSource } from "./asset.js";
import { dragToAngles, MIN_ELEVATION_DEG } from "./light.js";
import { renderFrame } from "./shade.js";
import { exportScreenshot, parseSidecar } from "./screenshot.js";
import { GlRenderer } from "./gl.js";
import { LightState, ShadeMode, ViewerAsset } from "./types.js";

/** Browser entry point. Static files only: serve the repo root (or any dir
 * containing a bundle) and open index.html?bundle=<path-to-viewer-dir>. */

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in index.html`);
  return node as T;
}

function download(name: string, blob: Blob): void {
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

function stateToHash(state: LightState): string {
  return (
    `#az=${state.azimuth_deg.toFixed(2)}&el=${state.elevation_deg.toFixed(2)}` +
    `&mode=${state.mode}&exp=${state.exposure}`
  );
}

function stateFromHash(hash: string, fallback: LightState): LightState {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  const doc = {
    azimuth_deg: Number(params.get("az") ?? fallback.azimuth_deg),
    elevation_deg: Number(params.get("el") ?? fallback.elevation_deg),
    mode: params.get("mode") ?? fallback.mode,
    exposure: Number(params.get("exp") ?? fallback.exposure),
  };
  try {
    return parseSidecar(JSON.stringify(doc));
  } catch {
    return fallback;
  }
}

async function main(): Promise<void> {
  const status = el<HTMLSpanElement>("status");
  const canvas = el<HTMLCanvasElement>("view");
  const modeSelect = el<HTMLSelectElement>("mode");
  const exposureInput = el<HTMLInputElement>("exposure");

  const bundle = new URLSearchParams(location.search).get("bundle") ?? "viewer";
  let asset: ViewerAsset;
  try {
    asset = await loadAsset(fetchSource(bundle));
  } catch (err) {
    status.textContent = `failed to load ${bundle}: ${(err as Error).message}`;
    throw err;
  }
  const { width, height, modes, exposure } = asset.manifest;
  canvas.width = width;
  canvas.height = height;
  document.title = `${asset.manifest.asset_id} - relight`;

  for (const mode of modes) {
    const opt = document.createElement("option");
    opt.value = opt.textContent = mode;
    modeSelect.appendChild(opt);
  }

  let state: LightState = stateFromHash(location.hash, {
    azimuth_deg: 0,
    elevation_deg: 90,
    mode: modes[0],
    exposure,
  });
  if (!modes.includes(state.mode)) state.mode = modes[0];
  modeSelect.value = state.mode;
  exposureInput.value = String(state.exposure);

  let gpu: GlRenderer | null = null;
  let cpuCtx: CanvasRenderingContext2D | null = null;
  try {
    gpu = new GlRenderer(canvas, asset);
  } catch {
    cpuCtx = canvas.getContext("2d");
    status.textContent = "WebGL2 unavailable; using CPU renderer";
  }

  function redraw(): void {
    const angles = { azimuthDeg: state.azimuth_deg, elevationDeg: state.elevation_deg };
    if (gpu) {
      gpu.render(angles, state.mode, state.exposure);
    } else if (cpuCtx) {
      const frame = renderFrame(asset, angles, state.mode, state.exposure);
      cpuCtx.putImageData(new ImageData(frame, width, height), 0, 0);
    }
    status.textContent =
      `azimuth ${state.azimuth_deg.toFixed(1)} deg, ` +
      `elevation ${state.elevation_deg.toFixed(1)} deg (min ${MIN_ELEVATION_DEG})`;
    history.replaceState(null, "", stateToHash(state));
  }

  function pointerToAngles(ev: PointerEvent): void {
    const rect = canvas.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * width;
    const py = ((ev.clientY - rect.top) / rect.height) * height;
    const angles = dragToAngles(px, py, width / 2, height / 2, Math.min(width, height) / 2);
    state.azimuth_deg = angles.azimuthDeg;
    state.elevation_deg = angles.elevationDeg;
    redraw();
  }

  let dragging = false;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
    pointerToAngles(ev);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (dragging) pointerToAngles(ev);
  });
  canvas.addEventListener("pointerup", (ev) => {
    dragging = false;
    canvas.releasePointerCapture(ev.pointerId);
  });

  modeSelect.addEventListener("change", () => {
    state.mode = modeSelect.value as ShadeMode;
    redraw();
  });
  exposureInput.addEventListener("change", () => {
    const v = Number(exposureInput.value);
    if (v > 0) {
      state.exposure = v;
      redraw();
    }
  });

  el<HTMLButtonElement>("screenshot").addEventListener("click", async () => {
    // screenshots always come from the CPU reference path
    const shot = await exportScreenshot(asset, state);
    const base = asset.manifest.asset_id;
    download(`${base}.png`, new Blob([shot.png], { type: "image/png" }));
    download(`${base}.json`, new Blob([shot.sidecar], { type: "application/json" }));
  });

  redraw();
}

main();
