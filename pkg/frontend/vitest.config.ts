import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the live suite drives a real simulator process
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
