import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    testTimeout: 60_000,
    hookTimeout: 60_000,
    // The e2e suite spawns one server per file; keep files sequential so
    // a slow sandbox cannot oversubscribe.
    fileParallelism: false,
  },
});
