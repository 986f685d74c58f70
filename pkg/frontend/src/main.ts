/** Browser entry point: mount the app against the same-origin API. */

import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  mountApp(root, new ApiClient());
}
