import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // the integration test boots the backing service, which takes a while
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
