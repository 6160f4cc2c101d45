// Browser bootstrap: wires the session client and store to the DOM.
// Configuration arrives via query string: ?server=ws://host:port&robot=id

import { ConsoleClient } from "./client";
import { ConsoleStore } from "./store";
import { AUTONOMY_LEVELS, type AutonomyLevel } from "./protocol";
import {
  canvasToPixel,
  renderDriveView,
  renderMapView,
  driveCanvasToRobot,
  type Markers,
} from "./view";

const params = new URLSearchParams(window.location.search);
const server = params.get("server") ?? `ws://${window.location.hostname}:8765`;
const robotId = params.get("robot") ?? "uvcbot";

const store = new ConsoleStore();
const client = new ConsoleClient(server, robotId, store);

const mapCanvas = document.getElementById("map") as HTMLCanvasElement;
const driveCanvas = document.getElementById("drive") as HTMLCanvasElement;
const badge = document.getElementById("mode-badge")!;
const linkEl = document.getElementById("link")!;
const lampBtn = document.getElementById("lamp") as HTMLButtonElement;
const slider = document.getElementById("autonomy") as HTMLInputElement;
const sliderLabel = document.getElementById("autonomy-label")!;
const batteryEl = document.getElementById("battery")!;
const doseEl = document.getElementById("dose")!;
const statusEl = document.getElementById("status")!;

const markers: Markers = { goal: null, drive: null };
let statusTimer: ReturnType<typeof setTimeout> | null = null;

function flash(text: string): void {
  statusEl.textContent = text;
  if (statusTimer) clearTimeout(statusTimer);
  statusTimer = setTimeout(() => (statusEl.textContent = ""), 4000);
}

mapCanvas.addEventListener("click", (ev) => {
  if (!store.map) return;
  const rect = mapCanvas.getBoundingClientRect();
  const { px, py } = canvasToPixel(
    mapCanvas,
    store.map,
    ((ev.clientX - rect.left) * mapCanvas.width) / rect.width,
    ((ev.clientY - rect.top) * mapCanvas.height) / rect.height
  );
  const result = client.clickMapGoal(px, py);
  if (result.ok && result.point) {
    markers.goal = result.point;
  } else if (result.reason) {
    flash(result.reason);
  }
});

driveCanvas.addEventListener("click", (ev) => {
  const rect = driveCanvas.getBoundingClientRect();
  const { x, y } = driveCanvasToRobot(
    driveCanvas,
    ((ev.clientX - rect.left) * driveCanvas.width) / rect.width,
    ((ev.clientY - rect.top) * driveCanvas.height) / rect.height
  );
  const result = client.clickDriveTarget(x, y);
  markers.drive = result.point ? { ...result.point, ok: result.ok } : null;
  if (!result.ok && result.reason) flash(result.reason);
});

slider.addEventListener("input", () => {
  const level = AUTONOMY_LEVELS[Number(slider.value)] as AutonomyLevel;
  sliderLabel.textContent = level.replace("_", " ");
  client.setAutonomy(level);
});

lampBtn.addEventListener("click", () => {
  const next = store.lampState !== "on";
  client.setLamp(next);
});

function refreshPanel(): void {
  badge.textContent = store.badge.replace("_", " ");
  badge.className = `badge ${store.pendingMode ? "pending" : ""}`;

  if (store.connection !== "paired") {
    linkEl.textContent = store.connection;
    linkEl.className = "link down";
  } else if (store.stale) {
    linkEl.textContent = "degraded (stale telemetry)";
    linkEl.className = "link degraded";
  } else {
    linkEl.textContent = "paired";
    linkEl.className = "link up";
  }

  const lamp = store.lampState;
  lampBtn.textContent =
    lamp === "on" ? "lamp: ON" : lamp === "forced_off" ? "lamp: FORCED OFF" : "lamp: off";
  lampBtn.className = `lamp ${lamp}`;

  if (store.battery) {
    batteryEl.textContent = `battery ${(store.battery.fraction * 100).toFixed(0)}% (${store.battery.wh.toFixed(1)} Wh)`;
    (batteryEl as HTMLElement).style.setProperty(
      "--level",
      `${store.battery.fraction * 100}%`
    );
  }
  if (store.dose) {
    doseEl.textContent =
      `dose coverage ${(store.dose.covered_fraction * 100).toFixed(1)}%` +
      ` · mean ${store.dose.mean.toFixed(1)} J/m²`;
  }
  if (store.goalStatus) {
    const gs = store.goalStatus;
    if (gs.state === "rejected" || gs.state === "aborted") {
      flash(`goal ${gs.state}${gs.reason ? `: ${gs.reason}` : ""}`);
      store.goalStatus = null;
    } else if (gs.state === "reached") {
      markers.goal = null;
      store.goalStatus = null;
    }
  }
}

function frame(): void {
  renderMapView(mapCanvas, store, markers);
  renderDriveView(driveCanvas, store, markers);
  refreshPanel();
  requestAnimationFrame(frame);
}

client.connect();
requestAnimationFrame(frame);
