// Entry point: ask once for the annotator name, then run the console.

import { ApiClient } from "./api.js";
import { AnnotatorApp } from "./ui.js";

const root = document.getElementById("app");
if (root) {
  const annotator =
    window.sessionStorage.getItem("annotator") ||
    window.prompt("Annotator name?") ||
    "anonymous";
  window.sessionStorage.setItem("annotator", annotator);
  const app = new AnnotatorApp(root, new ApiClient(""), annotator);
  void app.start();
}
