import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // The CLI round-trip test shells out to python3 and renders a phantom.
    testTimeout: 60000,
  },
});
