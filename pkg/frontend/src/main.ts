// Browser wiring: panes, panels, pointer handling. All state shown here
// arrives over the socket; this file only draws and forwards input.

import { DEFAULT_DRAG_SCALE, DragTracker, KeyAxes, buildInput, panelKindForKey, sliderFraction } from "./input.js";
import {
  SlotAddress,
  captureReference,
  panelCommand,
  setStandoff,
  startFullMission,
  startPartialMission,
  startTagSearch,
  startVisualInspection,
} from "./protocol.js";
import { ConsoleSession } from "./session.js";
import { GRID_COLORS, STATE_COLORS, decodePpm, fitWalls, rackCorners } from "./view.js";

const params = new URLSearchParams(location.search);
const endpoint = params.get("endpoint") ?? `ws://${location.hostname || "127.0.0.1"}:8765`;
const dragScale = parseFloat(params.get("scale") ?? "") || DEFAULT_DRAG_SCALE;

const mapCanvas = document.getElementById("map") as HTMLCanvasElement;
const faceCanvas = document.getElementById("face") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const statusLine = document.getElementById("status") as HTMLDivElement;
const eventLog = document.getElementById("events") as HTMLUListElement;

const session = new ConsoleSession({ url: endpoint });
const drag = new DragTracker(dragScale);
const keys = new KeyAxes();

function setBanner(text: string, tone: "info" | "warn" | "bad") {
  banner.textContent = text;
  banner.className = tone;
}

// --- mode panel -------------------------------------------------------------

function bindModePanel() {
  const modeSel = document.getElementById("mode") as HTMLSelectElement;
  const tagInput = document.getElementById("tag") as HTMLInputElement;
  const targetInput = document.getElementById("target") as HTMLInputElement;

  (document.getElementById("start") as HTMLButtonElement).onclick = () => {
    const mode = modeSel.value;
    if (mode === "full") session.sendCommand(startFullMission());
    else if (mode === "partial") {
      const racks = session.hello?.map.racks.length ?? 0;
      const region = [];
      for (let r = 0; r < racks; r++) region.push({ rack: r, side: "front" });
      session.sendCommand(startPartialMission(region));
    } else if (mode === "tag_search") session.sendCommand(startTagSearch(tagInput.value.trim()));
    else session.sendCommand(startVisualInspection(parseTarget(targetInput.value)));
  };
  (document.getElementById("pause") as HTMLButtonElement).onclick = () => session.pause();
  (document.getElementById("resume") as HTMLButtonElement).onclick = () => session.resume();
  (document.getElementById("abort") as HTMLButtonElement).onclick = () => session.abort();
  (document.getElementById("complete") as HTMLButtonElement).onclick = () => session.complete();

  const slider = document.getElementById("standoff") as HTMLInputElement;
  slider.oninput = () => session.sendCommand(setStandoff(sliderFraction(parseFloat(slider.value))));
}

function parseTarget(text: string): SlotAddress {
  // "rack,side,section,tier", e.g. "0,front,2,1"
  const bits = text.split(",").map((s) => s.trim());
  return {
    rack: parseInt(bits[0] ?? "0", 10) || 0,
    side: bits[1] === "back" ? "back" : "front",
    section: parseInt(bits[2] ?? "0", 10) || 0,
    tier: parseInt(bits[3] ?? "0", 10) || 0,
  };
}

function refreshButtons() {
  const allowed = session.allowedActions();
  for (const [id, action] of [
    ["start", "start_mission"], ["pause", "pause"], ["resume", "resume"],
    ["abort", "abort"], ["complete", "complete"],
  ] as const) {
    (document.getElementById(id) as HTMLButtonElement).disabled = !allowed.has(action);
  }
}

// --- flight input ------------------------------------------------------------

function bindFlightInput() {
  faceCanvas.addEventListener("pointerdown", (ev) => {
    faceCanvas.setPointerCapture(ev.pointerId);
    drag.down(ev.clientX, ev.clientY);
    session.sendCommand(captureReference(buildInput(drag, keys, Date.now())));
  });
  faceCanvas.addEventListener("pointermove", (ev) => drag.move(ev.clientX, ev.clientY));
  faceCanvas.addEventListener("pointerup", () => drag.up());
  faceCanvas.addEventListener("wheel", (ev) => {
    drag.wheel(ev.deltaY);
    ev.preventDefault();
  });
  document.addEventListener("keydown", (ev) => {
    keys.set(ev.code, true);
    const kind = panelKindForKey(ev.code);
    if (kind !== null && session.allowedActions().has("panel")) {
      session.sendCommand(panelCommand(kind));
      ev.preventDefault();
    }
  });
  document.addEventListener("keyup", (ev) => keys.set(ev.code, false));

  session.startTeleop(() => {
    if (session.missionPhase() !== "manual_flight") return null;
    if (!drag.active && keys.yaw() === 0 && !keys.trigger()) return null;
    return buildInput(drag, keys, Date.now());
  });
}

// --- drawing ------------------------------------------------------------------

function drawMap() {
  const ctx = mapCanvas.getContext("2d")!;
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, mapCanvas.width, mapCanvas.height);
  const floor = session.hello?.map;
  if (!floor) return;
  const t = fitWalls(floor.walls, mapCanvas.width, mapCanvas.height);

  ctx.strokeStyle = "#444";
  ctx.beginPath();
  floor.walls.forEach(([x, y], i) => {
    const [cx, cy] = t.toCanvas(x, y);
    if (i === 0) ctx.moveTo(cx, cy);
    else ctx.lineTo(cx, cy);
  });
  ctx.closePath();
  ctx.stroke();

  floor.racks.forEach((rack, ri) => {
    ctx.beginPath();
    rackCorners(rack).forEach(([x, y], i) => {
      const [cx, cy] = t.toCanvas(x, y);
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx, cy);
    });
    ctx.closePath();
    ctx.fillStyle = "#d8d0c0";
    ctx.fill();
    ctx.stroke();
    // verified fraction per rack as a fill bar
    const grids = (session.state?.slots ?? []).filter((s) => s.rack === ri);
    const total = grids.reduce((n, g) => n + g.grid.length, 0);
    const done = grids.reduce((n, g) => n + (g.grid.match(/V/g)?.length ?? 0), 0);
    if (total > 0) {
      const [cx, cy] = t.toCanvas(rack.origin[0], rack.origin[1]);
      ctx.fillStyle = "#333";
      ctx.font = "11px sans-serif";
      ctx.fillText(`${done}/${total}`, cx + 4, cy - 4);
    }
  });

  const st = session.state;
  if (st) {
    const [gx, gy] = t.toCanvas(st.ugv.x, st.ugv.y);
    ctx.fillStyle = "#2255cc";
    ctx.fillRect(gx - 6, gy - 4, 12, 8);
    const [ax, ay] = t.toCanvas(st.uav.x, st.uav.y);
    ctx.beginPath();
    ctx.arc(ax, ay, 5, 0, 2 * Math.PI);
    ctx.fillStyle = st.uav.status === "flying" ? "#cc3322" : "#884444";
    ctx.fill();
    ctx.strokeStyle = "#cc3322";
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(ax + 10 * Math.cos(st.uav.yaw), ay - 10 * Math.sin(st.uav.yaw));
    ctx.stroke();
  }
}

function drawFace() {
  const ctx = faceCanvas.getContext("2d")!;
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, faceCanvas.width, faceCanvas.height);
  const view = session.view;
  const floor = session.hello?.map;
  if (!view || !floor) return;

  if (view.face === null) {
    ctx.fillStyle = "#889";
    ctx.font = "14px sans-serif";
    ctx.fillText("no rack face in view", 16, 24);
    return;
  }
  const rack = floor.racks[view.face.rack];
  const cols = rack.sections, rows = rack.tiers;
  const cw = Math.min(faceCanvas.width / cols, faceCanvas.height / rows) * 0.9;
  const ox = (faceCanvas.width - cw * cols) / 2;
  const oy = (faceCanvas.height - cw * rows) / 2;

  // raster backdrop scaled up, vector states on top for crisp borders
  const raster = decodePpm(view.raster_ppm_b64);
  void raster; // kept for pane zoom; cell fills below carry the state colors
  for (const slot of view.slots) {
    const x = ox + slot.section * cw;
    const y = oy + (rows - 1 - slot.tier) * cw;
    ctx.fillStyle = STATE_COLORS[slot.state];
    ctx.fillRect(x + 1, y + 1, cw - 2, cw - 2);
    ctx.strokeStyle = "#222";
    ctx.strokeRect(x + 1, y + 1, cw - 2, cw - 2);
  }
  ctx.fillStyle = "#ccc";
  ctx.font = "12px sans-serif";
  ctx.fillText(`rack ${view.face.rack} ${view.face.side}`, 10, 16);
}

function drawTwinGrids() {
  const pane = document.getElementById("grids") as HTMLDivElement;
  const st = session.state;
  if (!st) return;
  pane.innerHTML = "";
  for (const face of st.slots) {
    const div = document.createElement("div");
    div.className = "facegrid";
    const label = document.createElement("span");
    label.textContent = `r${face.rack} ${face.side}`;
    div.appendChild(label);
    for (const ch of face.grid) {
      const cell = document.createElement("i");
      cell.style.background = GRID_COLORS[ch] ?? "#fff";
      div.appendChild(cell);
    }
    pane.appendChild(div);
  }
}

function refreshStatus() {
  const st = session.state;
  if (!st) return;
  const m = st.mission;
  statusLine.textContent =
    `t=${st.time.toFixed(1)}s  battery ${(st.battery * 100).toFixed(0)}%  uav ${st.uav.status}` +
    (m ? `  |  ${m.mode} ${m.phase} ${m.verified}/${m.total}` : "  |  no mission");

  if (session.closed) setBanner("connection lost", "bad");
  else if (st.uav.status === "soft_landing") setBanner("soft landing in progress", "warn");
  else if (session.lastError) setBanner(session.lastError, "warn");
  else setBanner("connected", "info");
}

function appendEvents() {
  const seen = eventLog.childElementCount;
  for (const ev of session.events.slice(seen)) {
    const li = document.createElement("li");
    li.textContent = `#${ev.tick} ${ev.event_type} ${JSON.stringify(ev.payload)}`;
    eventLog.appendChild(li);
    if (ev.event_type === "search_exhausted") {
      const options = (ev.payload.options as string[]) ?? [];
      setBanner(`tag not found; options: ${options.join(" / ")}`, "warn");
    }
  }
  while (eventLog.childElementCount > 120) eventLog.removeChild(eventLog.firstChild!);
}

function frameLoop() {
  drawMap();
  drawFace();
  drawTwinGrids();
  refreshStatus();
  refreshButtons();
  appendEvents();
  requestAnimationFrame(frameLoop);
}

async function start() {
  setBanner(`connecting to ${endpoint}`, "info");
  try {
    await session.connect();
  } catch (exc) {
    setBanner(`cannot connect: ${exc}`, "bad");
    return;
  }
  session.startHeartbeat();
  bindModePanel();
  bindFlightInput();
  frameLoop();
}

start();
