import { App } from "./ui.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}
// same-origin by default; override for a dev server on another port, e.g.
//   localStorage.setItem("tlp-api", "http://127.0.0.1:8700")
const baseUrl = localStorage.getItem("tlp-api") ?? "";
void new App(root, baseUrl).start();
