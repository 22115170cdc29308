// Companion viewer: shows streamed frames, pilots the head pose, edits params
// and charts the per-frame timing segments.
"use strict";

const SPEED = 1.0;        // m/s for W/A/S/D/Q/E
const TURN = 0.005;       // rad per dragged pixel
const WINDOW = 300;       // frames kept for the chart

const state = {
  ws: null, pilot: false, stream: "sbs",
  pos: [0, 0, 0.6], yaw: 0, pitch: 0,
  keys: new Set(), dirty: false, dragging: false,
  timing: [], periodMs: 1000 / 90,
};

const $ = (id) => document.getElementById(id);

function quat(yaw, pitch) {
  // yaw about +Y then pitch about the local +X
  const cy = Math.cos(yaw / 2), sy = Math.sin(yaw / 2), cp = Math.cos(pitch / 2), sp = Math.sin(pitch / 2);
  return [cy * sp, sy * cp, -sy * sp, cy * cp];
}

function connect() {
  const ws = new WebSocket(`ws://${location.host}/ws`);
  ws.binaryType = "arraybuffer";
  state.ws = ws;
  ws.onopen = () => { $("status").textContent = "connected"; $("status").className = "up"; subscribe(); };
  ws.onclose = () => {
    $("status").textContent = "disconnected, retrying"; $("status").className = "down";
    state.pilot = false; setTimeout(connect, 1000);
  };
  ws.onmessage = (ev) => (typeof ev.data === "string" ? onText(JSON.parse(ev.data)) : onFrame(ev.data));
}

function subscribe() {
  if (state.ws && state.ws.readyState === 1) state.ws.send(JSON.stringify({ type: "subscribe", stream: state.stream }));
}

function onText(m) {
  switch (m.type) {
    case "hello":
      state.pilot = m.role === "pilot";
      state.periodMs = 1000 / m.config.refreshHz;
      showRole();
      buildParams(m.params);
      break;
    case "role":
      state.pilot = m.role === "pilot"; showRole(); break;
    case "param":
      setParamCell(m.node, m.name, m.value); break;
    case "timing":
      state.timing.push(m);
      if (state.timing.length > WINDOW) state.timing.shift();
      if (!state.dragging && !state.keys.size) adoptPose(m.pose);
      break;
    case "error":
      $("errors").textContent = m.reason; break;
  }
}

function adoptPose(p) {
  // displayed pose follows the last pose the server rendered
  state.pos = p.position.slice();
  const [x, y, z, w] = p.orientation;
  state.yaw = Math.atan2(2 * (w * y + x * z), 1 - 2 * (x * x + y * y));
  state.pitch = Math.asin(Math.max(-1, Math.min(1, 2 * (w * x - y * z))));
}

function showRole() {
  $("role").textContent = state.pilot ? "pilot" : "observer";
  $("hint").textContent = state.pilot ? "drag to turn, WASD/QE to move" : "another viewer holds the pilot role";
}

function onFrame(buf) {
  const b = new DataView(buf);
  if (buf.byteLength < 16 || b.getUint32(0) !== 0x56524246) return;  // "VRBF"
  const w = b.getUint16(10, true), h = b.getUint16(12, true);
  if (buf.byteLength !== 16 + w * h * 4) return;
  const c = $("view");
  if (c.width !== w || c.height !== h) { c.width = w; c.height = h; }
  c.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(buf, 16), w, h), 0, 0);
}

function buildParams(params) {
  const t = $("params");
  t.innerHTML = "";
  for (const p of params) {
    const tr = t.insertRow();
    tr.insertCell().textContent = `${p.node}.${p.name}`;
    tr.insertCell().textContent = p.type;
    const td = tr.insertCell();
    const inp = document.createElement("input");
    inp.dataset.key = `${p.node}.${p.name}`;
    inp.value = JSON.stringify(p.value);
    inp.disabled = p.output;
    inp.onchange = () => {
      let v;
      try { v = JSON.parse(inp.value); } catch { v = inp.value; }
      state.ws.send(JSON.stringify({ type: "param", node: p.node, name: p.name, value: v }));
    };
    td.appendChild(inp);
  }
}

function setParamCell(node, name, value) {
  const inp = document.querySelector(`input[data-key="${CSS.escape(node + "." + name)}"]`);
  if (inp && document.activeElement !== inp) inp.value = JSON.stringify(value);
}

function drawTiming() {
  const c = $("timing"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const px = c.height / (3 * state.periodMs), bw = c.width / WINDOW;
  const colors = { sceneMs: "#3b7dd8", otherMs: "#89b4f0", compositorMs: "#c07a2e", idleMs: "#444" };
  state.timing.forEach((r, i) => {
    let y = c.height;
    for (const k of ["sceneMs", "otherMs", "compositorMs", "idleMs"]) {
      const h = r[k] * px;
      g.fillStyle = r.dropped && k === "sceneMs" ? "#d83b3b" : colors[k];
      g.fillRect(i * bw, y - h, Math.max(1, bw - 0.5), h);
      y -= h;
    }
  });
  g.strokeStyle = "#2a2";
  g.beginPath(); g.moveTo(0, c.height - state.periodMs * px); g.lineTo(c.width, c.height - state.periodMs * px); g.stroke();
}

let last = performance.now();
function tick(now) {
  const dt = Math.min(0.1, (now - last) / 1000);
  last = now;
  if (state.pilot && state.keys.size) {
    const f = [-Math.sin(state.yaw), 0, -Math.cos(state.yaw)], r = [Math.cos(state.yaw), 0, -Math.sin(state.yaw)];
    const k = (c) => (state.keys.has(c) ? 1 : 0);
    const fwd = k("w") - k("s"), side = k("d") - k("a"), up = k("e") - k("q");
    for (let i = 0; i < 3; i++) state.pos[i] += SPEED * dt * (fwd * f[i] + side * r[i]);
    state.pos[1] += SPEED * dt * up;
    state.dirty = true;
  }
  if (state.dirty && state.pilot && state.ws && state.ws.readyState === 1) {
    state.ws.send(JSON.stringify({ type: "pose", position: state.pos, orientation: quat(state.yaw, state.pitch) }));
    state.dirty = false;
  }
  drawTiming();
  requestAnimationFrame(tick);
}

const view = $("view");
view.addEventListener("keydown", (e) => state.keys.add(e.key.toLowerCase()));
view.addEventListener("keyup", (e) => state.keys.delete(e.key.toLowerCase()));
view.addEventListener("mousedown", () => { state.dragging = true; view.focus(); });
window.addEventListener("mouseup", () => { state.dragging = false; });
window.addEventListener("mousemove", (e) => {
  if (!state.dragging || !state.pilot) return;
  state.yaw -= e.movementX * TURN;
  state.pitch = Math.max(-1.5, Math.min(1.5, state.pitch - e.movementY * TURN));
  state.dirty = true;
});
for (const r of document.querySelectorAll("input[name=stream]"))
  r.addEventListener("change", () => { state.stream = r.value; subscribe(); });

connect();
requestAnimationFrame(tick);
