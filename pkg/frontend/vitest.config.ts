import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // Each server-backed test file boots a real service + stub backend.
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
