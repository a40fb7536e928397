import { ApiClient } from "./api.js";
import { ReviewSession } from "./session.js";
import { ReviewApp } from "./ui.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app element");
}
const api = new ApiClient("");
const session = new ReviewSession(api);
const app = new ReviewApp(root, session, api);
void app.start();
