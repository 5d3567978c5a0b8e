import { TwinApi } from "./api.js";
import { DecisionApp } from "./app.js";

// same-origin by default (the service mounts the built UI under /ui);
// override with ?api=http://host:port when served separately
const params = new URLSearchParams(window.location.search);
const api = new TwinApi(params.get("api") ?? "");
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

new DecisionApp(root, api).start().catch((err) => {
  root.innerHTML = `<div class="banner">failed to start: ${String(err)}</div>`;
});
