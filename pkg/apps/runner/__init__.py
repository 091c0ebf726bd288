# runner app
