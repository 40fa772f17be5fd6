import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // the end-to-end file boots a real labeling server and trains between
    // rounds, so it gets a generous ceiling; everything else is instant
    testTimeout: 240_000,
    hookTimeout: 60_000,
  },
});
