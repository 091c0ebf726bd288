# runner jobs
